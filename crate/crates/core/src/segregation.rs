//! Segregation diagnostics: overlap metrics, comparison fields, the
//! multiplicity map, and nodal curve extraction.
//!
//! A fully segregated state has pairwise disjoint supports; at finite β the
//! supports overlap on a layer of width ~ β^{-1/2}. The diagnostics here
//! quantify how far a computed state is from the segregated class (overlap
//! norms, one-sided Laplacian defects) and extract its geometry: where each
//! species lives, where exactly two meet (the interfaces Γ_ij, polylines in
//! strip coordinates) and where three or more meet (the singular cluster).

use crate::error::{Error, Result};
use crate::grid::{strip_laplacian, Field, FieldKind, StripGrid};
use crate::solver::{CompetitionMatrix, SystemState};
use std::collections::HashMap;

/// Worst pairwise overlap of a state, in the sup norm and the disk-area
/// weighted L² norm (dA = e^{-2y} dθ dy on the strip).
#[derive(Debug, Clone, Copy)]
pub struct OverlapMetrics {
    pub linf: f64,
    pub l2: f64,
    /// Pair realizing the sup-norm maximum.
    pub pair: (usize, usize),
}

pub fn overlap_metrics(state: &SystemState) -> OverlapMetrics {
    let grid = state.grid();
    let cell = grid.d_theta() * grid.dy();
    let mut out = OverlapMetrics { linf: 0.0, l2: 0.0, pair: (0, 1) };
    for i in 0..state.k() {
        for j in i + 1..state.k() {
            let (mut linf, mut l2) = (0.0f64, 0.0f64);
            for jr in 0..grid.n_y {
                let weight = (-2.0 * grid.y(jr)).exp() * cell;
                let (ri, rj) = (state.fields[i].row(jr), state.fields[j].row(jr));
                for ii in 0..grid.n_theta {
                    let p = ri[ii] * rj[ii];
                    linf = linf.max(p);
                    l2 += p * p * weight;
                }
            }
            if linf > out.linf {
                out.pair = (i, j);
            }
            out.linf = out.linf.max(linf);
            out.l2 = out.l2.max(l2.sqrt());
        }
    }
    out
}

/// Comparison field `û_i = u_i − Σ_{j≠i} (a_ij/a_ji) u_j`. The equation
/// satisfied by the u_j makes û_i superharmonic while u_i itself is
/// subharmonic; together they pin the interface conditions.
pub fn hat_field(state: &SystemState, i: usize, a: &CompetitionMatrix) -> Result<Field> {
    if a.k != state.k() || i >= state.k() {
        return Err(Error::InvalidMatrix(format!(
            "hat field for species {i} of {} with a {} x {} matrix",
            state.k(),
            a.k,
            a.k
        )));
    }
    let mut out = state.fields[i].clone();
    out.kind = FieldKind::Signed;
    for j in 0..state.k() {
        if j == i {
            continue;
        }
        let ratio = a.get(i, j) / a.get(j, i);
        for (o, v) in out.values.iter_mut().zip(&state.fields[j].values) {
            *o -= ratio * v;
        }
    }
    Ok(out)
}

/// One-sided disk-Laplacian defects of a state, normalized by the global
/// field maximum.
#[derive(Debug, Clone, Copy)]
pub struct SignDefect {
    /// Max of `(−e^{2y} Δ_strip u_i)_+`: u_i should be subharmonic.
    pub sub: f64,
    /// Max of `(−e^{2y} Δ_strip û_i)_−`: û_i should be superharmonic.
    pub sup: f64,
}

/// Pointwise check of the segregated-class differential inequalities,
/// optionally skipping a Cartesian ball (the inequalities are only clean
/// away from the singular cluster).
pub fn sign_defects(
    state: &SystemState,
    a: &CompetitionMatrix,
    exclude: Option<((f64, f64), f64)>,
) -> Result<Vec<SignDefect>> {
    let grid = state.grid();
    let scale = state
        .fields
        .iter()
        .fold(0.0f64, |m, f| m.max(f.max_abs()))
        .max(1e-300);
    let keep = |i: usize, j: usize| match exclude {
        None => true,
        Some(((cx, cy), rad)) => {
            let (px, py) = grid.to_cartesian(grid.theta(i), grid.y(j));
            (px - cx).hypot(py - cy) > rad
        }
    };
    let mut out = Vec::with_capacity(state.k());
    for i in 0..state.k() {
        let lap_u = strip_laplacian(&state.fields[i]);
        let lap_hat = strip_laplacian(&hat_field(state, i, a)?);
        let (mut sub, mut sup) = (0.0f64, 0.0f64);
        for j in 1..grid.n_y - 1 {
            let e2y = (2.0 * grid.y(j)).exp();
            for ii in 0..grid.n_theta {
                if !keep(ii, j) {
                    continue;
                }
                sub = sub.max(-e2y * lap_u.at(ii, j));
                sup = sup.max(e2y * lap_hat.at(ii, j));
            }
        }
        out.push(SignDefect { sub: sub / scale, sup: sup / scale });
    }
    Ok(out)
}

/// Discrete multiplicity: per node, the number of species exceeding the
/// presence threshold somewhere in a fixed Cartesian probe ball.
#[derive(Debug, Clone)]
pub struct MultiplicityMap {
    pub grid: StripGrid,
    pub values: Vec<u8>,
    pub delta: f64,
    pub rho: f64,
    /// Cartesian probe radius `ρ · max(dθ, dy)` (grid spacing at the unit
    /// circle, where strip cells are largest in disk metric).
    pub r_ball: f64,
}

impl MultiplicityMap {
    pub fn at(&self, i: usize, j: usize) -> u8 {
        self.values[self.grid.idx(i, j)]
    }
}

fn arc_count(pre: &[u32], nt: usize, lo: i64, hi: i64) -> u32 {
    if hi - lo + 1 >= nt as i64 {
        return pre[nt];
    }
    let a = lo.rem_euclid(nt as i64) as usize;
    let b = hi.rem_euclid(nt as i64) as usize;
    if a <= b {
        pre[b + 1] - pre[a]
    } else {
        pre[nt] - pre[a] + pre[b + 1]
    }
}

/// How a probe ball centered on one row meets another row's circle.
enum RowWindow {
    Full,
    Arc(i64),
}

pub fn multiplicity_map(state: &SystemState, delta: f64, rho: f64) -> Result<MultiplicityMap> {
    if !(delta > 0.0) {
        return Err(Error::Analysis(format!("presence threshold delta = {delta}, need > 0")));
    }
    if !(rho >= 2.0) {
        return Err(Error::Analysis(format!("probe radius rho = {rho} cells, need >= 2")));
    }
    let grid = state.grid();
    let (nt, ny) = (grid.n_theta, grid.n_y);
    let r_ball = rho * grid.d_theta().max(grid.dy());
    let radii: Vec<f64> = (0..ny).map(|j| (-grid.y(j)).exp()).collect();

    // presence prefix counts per species per row, for O(1) arc queries
    let prefixes: Vec<Vec<Vec<u32>>> = state
        .fields
        .iter()
        .map(|f| {
            (0..ny)
                .map(|j| {
                    let row = f.row(j);
                    let mut pre = Vec::with_capacity(nt + 1);
                    pre.push(0u32);
                    for ii in 0..nt {
                        pre.push(pre[ii] + u32::from(row[ii] > delta));
                    }
                    pre
                })
                .collect()
        })
        .collect();

    let mut values = vec![0u8; grid.n_nodes()];
    let dt = grid.d_theta();
    for j in 0..ny {
        let r = radii[j];
        // rows whose circle meets a ball of radius r_ball centered at depth r
        let lo_row = radii.partition_point(|&rr| rr > r + r_ball);
        let hi_row = radii.partition_point(|&rr| rr >= r - r_ball).saturating_sub(1);
        let mut windows: Vec<(usize, RowWindow)> = Vec::with_capacity(hi_row + 1 - lo_row);
        for jr in lo_row..=hi_row {
            let rr = radii[jr];
            let cos_d = (r * r + rr * rr - r_ball * r_ball) / (2.0 * r * rr);
            if cos_d <= -1.0 {
                windows.push((jr, RowWindow::Full));
            } else {
                let half = cos_d.min(1.0).acos() / dt;
                windows.push((jr, RowWindow::Arc(half.floor() as i64)));
            }
        }
        for i in 0..nt {
            let mut m = 0u8;
            for pre_s in &prefixes {
                let found = windows.iter().any(|(jr, w)| match w {
                    RowWindow::Full => pre_s[*jr][nt] > 0,
                    RowWindow::Arc(half) => {
                        arc_count(&pre_s[*jr], nt, i as i64 - half, i as i64 + half) > 0
                    }
                });
                m += u8::from(found);
            }
            values[grid.idx(i, j)] = m;
        }
    }
    Ok(MultiplicityMap { grid, values, delta, rho, r_ball })
}

/// One connected component of `{m ≥ 3}`.
#[derive(Debug, Clone)]
pub struct SingularCluster {
    pub nodes: usize,
    pub centroid_xy: (f64, f64),
    /// Centroid in strip coordinates; y is clamped to the resolved depth
    /// when the centroid falls inside the truncation hole.
    pub centroid_strip: (f64, f64),
    /// Max Cartesian pairwise distance within the cluster.
    pub extent: f64,
    /// Centroid distance to the origin in units of `max(dθ, dy)`.
    pub dist_cells: f64,
}

#[derive(Debug, Clone)]
pub struct SingularReport {
    /// All clusters, largest first.
    pub clusters: Vec<SingularCluster>,
    /// The theory predicts a single multiple point; more than one cluster
    /// is an empirical violation.
    pub unique: bool,
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn diameter(pts: &[(f64, f64)]) -> f64 {
    let hull = convex_hull(pts.to_vec());
    let mut best = 0.0f64;
    for (n, a) in hull.iter().enumerate() {
        for b in &hull[n + 1..] {
            best = best.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    best
}

/// Connected components of `{m ≥ 3}` (4-connectivity, periodic in θ),
/// largest first. `None` when no node reaches multiplicity 3.
pub fn locate_singular_point(map: &MultiplicityMap) -> Option<SingularReport> {
    let grid = map.grid;
    let (nt, ny) = (grid.n_theta, grid.n_y);
    let mut seen = vec![false; grid.n_nodes()];
    let mut clusters = Vec::new();
    for start in 0..grid.n_nodes() {
        if seen[start] || map.values[start] < 3 {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = vec![start];
        seen[start] = true;
        while let Some(idx) = queue.pop() {
            members.push(idx);
            let (i, j) = (idx % nt, idx / nt);
            let mut push = |ii: usize, jj: usize, queue: &mut Vec<usize>| {
                let n = grid.idx(ii, jj);
                if !seen[n] && map.values[n] >= 3 {
                    seen[n] = true;
                    queue.push(n);
                }
            };
            push((i + 1) % nt, j, &mut queue);
            push((i + nt - 1) % nt, j, &mut queue);
            if j + 1 < ny {
                push(i, j + 1, &mut queue);
            }
            if j > 0 {
                push(i, j - 1, &mut queue);
            }
        }
        let pts: Vec<(f64, f64)> = members
            .iter()
            .map(|&idx| grid.to_cartesian(grid.theta(idx % nt), grid.y(idx / nt)))
            .collect();
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let rc = cx.hypot(cy);
        let theta_c = if rc > 0.0 { cy.atan2(cx).rem_euclid(2.0 * std::f64::consts::PI) } else { 0.0 };
        let y_c = (-rc.max(grid.r_min()).ln()).min(grid.y_max);
        clusters.push(SingularCluster {
            nodes: members.len(),
            centroid_xy: (cx, cy),
            centroid_strip: (theta_c, y_c),
            extent: diameter(&pts),
            dist_cells: rc / grid.d_theta().max(grid.dy()),
        });
    }
    if clusters.is_empty() {
        return None;
    }
    clusters.sort_by(|a, b| b.nodes.cmp(&a.nodes));
    let unique = clusters.len() == 1;
    Some(SingularReport { clusters, unique })
}

/// Interface polyline between two species, in strip coordinates with θ
/// unwrapped continuously (spirals wind past 2π).
#[derive(Debug, Clone)]
pub struct NodalCurve {
    pub species: (usize, usize),
    /// (θ_unwrapped, y), ordered from the outer circle inward.
    pub points: Vec<(f64, f64)>,
    /// Total chains found for this pair; `points` is the longest.
    pub fragments: usize,
    pub partial: bool,
}

/// Canonical grid edge: horizontal (dir 0) joins (i, j)-(i+1 mod nt, j),
/// vertical (dir 1) joins (i, j)-(i, j+1).
type EdgeId = (u8, usize, usize);

fn edge_point(grid: StripGrid, id: EdgeId, t: f64) -> (f64, f64) {
    let (dir, i, j) = id;
    if dir == 0 {
        ((i as f64 + t) * grid.d_theta(), grid.y(j))
    } else {
        (grid.theta(i), (j as f64 + t) * grid.dy())
    }
}

/// Marching-squares zero contours of `a_ji u_i − a_ij u_j` for every species
/// pair, restricted to cells where the pair dominates (no third species
/// exceeds both at any corner). Pairs whose longest chain never rises above
/// `delta` in `max(u_i, u_j)` are dropped: their "contour" is sign noise in
/// a region the pair does not own.
pub fn extract_nodal_curves(
    state: &SystemState,
    a: &CompetitionMatrix,
    delta: f64,
) -> Result<Vec<NodalCurve>> {
    if a.k != state.k() {
        return Err(Error::InvalidMatrix(format!(
            "{} species with a {} x {} matrix",
            state.k(),
            a.k,
            a.k
        )));
    }
    let grid = state.grid();
    let (nt, ny) = (grid.n_theta, grid.n_y);
    let mut curves = Vec::new();
    for si in 0..state.k() {
        for sj in si + 1..state.k() {
            let ui = &state.fields[si];
            let uj = &state.fields[sj];
            let g: Vec<f64> = ui
                .values
                .iter()
                .zip(&uj.values)
                .map(|(&vi, &vj)| a.get(sj, si) * vi - a.get(si, sj) * vj)
                .collect();
            let dominated = |i: usize, j: usize| {
                let pair_max = ui.at(i, j).max(uj.at(i, j));
                (0..state.k())
                    .filter(|&l| l != si && l != sj)
                    .all(|l| state.fields[l].at(i, j) <= pair_max)
            };

            // crossing point plus the pair amplitude max(u_i, u_j) at the
            // edge endpoints; on the curve itself both species vanish, so
            // liveness must be judged next to it, not on it
            let mut crossings: HashMap<EdgeId, ((f64, f64), f64)> = HashMap::new();
            let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
            let pos = |idx: usize| g[idx] > 0.0;
            for cj in 0..ny - 1 {
                for ci in 0..nt {
                    let ci1 = (ci + 1) % nt;
                    if !(dominated(ci, cj)
                        && dominated(ci1, cj)
                        && dominated(ci, cj + 1)
                        && dominated(ci1, cj + 1))
                    {
                        continue;
                    }
                    let c00 = grid.idx(ci, cj);
                    let c10 = grid.idx(ci1, cj);
                    let c01 = grid.idx(ci, cj + 1);
                    let c11 = grid.idx(ci1, cj + 1);
                    let mut cell_edges: Vec<EdgeId> = Vec::with_capacity(4);
                    let check = |id: EdgeId,
                                     na: usize,
                                     nb: usize,
                                     crossings: &mut HashMap<EdgeId, ((f64, f64), f64)>,
                                     cell_edges: &mut Vec<EdgeId>| {
                        if pos(na) != pos(nb) {
                            crossings.entry(id).or_insert_with(|| {
                                let t = g[na] / (g[na] - g[nb]);
                                let amp = ui.values[na]
                                    .max(uj.values[na])
                                    .max(ui.values[nb])
                                    .max(uj.values[nb]);
                                (edge_point(grid, id, t), amp)
                            });
                            cell_edges.push(id);
                        }
                    };
                    let bottom = (0u8, ci, cj);
                    let top = (0u8, ci, cj + 1);
                    let left = (1u8, ci, cj);
                    let right = (1u8, ci1, cj);
                    check(bottom, c00, c10, &mut crossings, &mut cell_edges);
                    check(top, c01, c11, &mut crossings, &mut cell_edges);
                    check(left, c00, c01, &mut crossings, &mut cell_edges);
                    check(right, c10, c11, &mut crossings, &mut cell_edges);
                    match cell_edges.len() {
                        2 => segments.push((cell_edges[0], cell_edges[1])),
                        4 => {
                            // saddle: pick the pairing consistent with the
                            // sign of the cell average
                            let avg = g[c00] + g[c10] + g[c01] + g[c11];
                            if (avg > 0.0) == pos(c00) {
                                segments.push((bottom, right));
                                segments.push((top, left));
                            } else {
                                segments.push((bottom, left));
                                segments.push((top, right));
                            }
                        }
                        _ => {}
                    }
                }
            }
            if segments.is_empty() {
                continue;
            }

            let chains = chain_segments(&segments);
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut polylines: Vec<(Vec<(f64, f64)>, bool)> = Vec::with_capacity(chains.len());
            for chain in &chains {
                let mut pts: Vec<(f64, f64)> = Vec::with_capacity(chain.len());
                let mut alive = false;
                for id in chain {
                    let ((theta, y), amp) = crossings[id];
                    alive |= amp > delta;
                    if let Some(&(prev, _)) = pts.last() {
                        let wrapped = theta.rem_euclid(two_pi);
                        let turns = ((prev - wrapped) / two_pi).round();
                        pts.push((wrapped + turns * two_pi, y));
                    } else {
                        pts.push((theta.rem_euclid(two_pi), y));
                    }
                }
                if pts.first().map(|p| p.1) > pts.last().map(|p| p.1) {
                    pts.reverse();
                }
                polylines.push((pts, alive));
            }
            polylines.sort_by_key(|p| std::cmp::Reverse(p.0.len()));
            let (main, alive) = &polylines[0];
            if !alive {
                continue;
            }
            curves.push(NodalCurve {
                species: (si, sj),
                points: main.clone(),
                fragments: polylines.len(),
                partial: polylines.len() > 1,
            });
        }
    }
    Ok(curves)
}

/// Join marching-squares segments into maximal chains of edge IDs. Open
/// chains (endpoints of degree 1) are walked first, then any leftover
/// closed loops.
fn chain_segments(segments: &[(EdgeId, EdgeId)]) -> Vec<Vec<EdgeId>> {
    let mut adjacency: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (n, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(n);
        adjacency.entry(*b).or_default().push(n);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let walk = |start: EdgeId, used: &mut Vec<bool>| -> Vec<EdgeId> {
        let mut chain = vec![start];
        let mut cur = start;
        loop {
            let next_seg = adjacency[&cur].iter().find(|&&s| !used[s]).copied();
            let Some(s) = next_seg else { break };
            used[s] = true;
            let (a, b) = segments[s];
            cur = if a == cur { b } else { a };
            chain.push(cur);
        }
        chain
    };
    let mut endpoints: Vec<EdgeId> = adjacency
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&id, _)| id)
        .collect();
    endpoints.sort_unstable();
    for id in endpoints {
        if adjacency[&id].iter().any(|&s| !used[s]) {
            chains.push(walk(id, &mut used));
        }
    }
    for n in 0..segments.len() {
        if !used[n] {
            used[n] = true;
            let (a, b) = segments[n];
            let mut chain = walk(b, &mut used);
            chain.insert(0, a);
            chains.push(chain);
        }
    }
    chains
}
