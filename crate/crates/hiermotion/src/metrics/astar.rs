//! 8-connected grid A* with deterministic tie-breaking, plus scene
//! rasterization for the path-planning baseline.

use super::MetricError;
use crate::sensing::Scene;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Walkable ground raster over a scene's bounds.
#[derive(Debug, Clone)]
pub struct GroundGrid {
    pub blocked: Vec<bool>,
    pub nx: usize,
    pub nz: usize,
    pub origin: [f64; 2],
    pub resolution: f64,
}

impl GroundGrid {
    pub fn idx(&self, c: (usize, usize)) -> usize {
        c.0 * self.nz + c.1
    }

    pub fn cell_center(&self, c: (usize, usize)) -> [f64; 2] {
        [
            self.origin[0] + (c.0 as f64 + 0.5) * self.resolution,
            self.origin[1] + (c.1 as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn world_to_cell(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fx = (p[0] - self.origin[0]) / self.resolution;
        let fz = (p[1] - self.origin[1]) / self.resolution;
        if fx < 0.0 || fz < 0.0 {
            return None;
        }
        let (cx, cz) = (fx as usize, fz as usize);
        if cx < self.nx && cz < self.nz {
            Some((cx, cz))
        } else {
            None
        }
    }

    /// Nearest free cell to a world point (for endpoint snapping).
    pub fn nearest_free_cell(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let start = self.world_to_cell(p)?;
        if !self.blocked[self.idx(start)] {
            return Some(start);
        }
        let mut best: Option<((usize, usize), f64)> = None;
        for cx in 0..self.nx {
            for cz in 0..self.nz {
                if self.blocked[self.idx((cx, cz))] {
                    continue;
                }
                let c = self.cell_center((cx, cz));
                let d = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                if best.map(|(_, bd)| d < bd).unwrap_or(true) {
                    best = Some(((cx, cz), d));
                }
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Rasterizes the scene's ground plane: a cell is blocked when its center
/// lies within `inflation` meters of any object's occupied footprint.
pub fn rasterize_scene(scene: &Scene, resolution: f64, inflation: f64) -> GroundGrid {
    let ext = scene.bounds.extent();
    let nx = (ext[0] / resolution).ceil() as usize;
    let nz = (ext[1] / resolution).ceil() as usize;
    let mut grid = GroundGrid {
        blocked: vec![false; nx * nz],
        nx,
        nz,
        origin: scene.bounds.min,
        resolution,
    };
    for cx in 0..nx {
        for cz in 0..nz {
            let center = grid.cell_center((cx, cz));
            let blocked = scene.objects.iter().any(|obj| {
                footprint_distance_2d(obj, center) <= inflation
            });
            if blocked {
                let i = grid.idx((cx, cz));
                grid.blocked[i] = true;
            }
        }
    }
    grid
}

fn footprint_distance_2d(obj: &crate::motion::SceneObject, world: [f64; 2]) -> f64 {
    use crate::motion::{SceneObject, GRID_DIM};
    let local = obj.frame.to_local_point(world);
    let c = obj.cell_size;
    let half = GRID_DIM as f64 / 2.0 * c;
    let mut best = f64::INFINITY;
    for ix in 0..GRID_DIM {
        for iz in 0..GRID_DIM {
            let occupied =
                (0..GRID_DIM).any(|iy| obj.grid[SceneObject::cell_index(ix, iy, iz)]);
            if !occupied {
                continue;
            }
            let lo = [ix as f64 * c - half, iz as f64 * c - half];
            let hi = [lo[0] + c, lo[1] + c];
            let dx = (lo[0] - local[0]).max(local[0] - hi[0]).max(0.0);
            let dz = (lo[1] - local[1]).max(local[1] - hi[1]).max(0.0);
            best = best.min((dx * dx + dz * dz).sqrt());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<(usize, usize)>,
    /// Path cost in cell units (1 per axis step, √2 per diagonal).
    pub cost: f64,
}

#[derive(PartialEq)]
struct HeapEntry {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap with deterministic (f, h, index) tie-breaking
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn neighbors(nx: usize, nz: usize, idx: usize) -> impl Iterator<Item = (usize, f64)> {
    let (cx, cz) = (idx / nz, idx % nz);
    let deltas: [(i64, i64, f64); 8] = [
        (1, 0, 1.0),
        (-1, 0, 1.0),
        (0, 1, 1.0),
        (0, -1, 1.0),
        (1, 1, SQRT2),
        (1, -1, SQRT2),
        (-1, 1, SQRT2),
        (-1, -1, SQRT2),
    ];
    deltas.into_iter().filter_map(move |(dx, dz, cost)| {
        let x = cx as i64 + dx;
        let z = cz as i64 + dz;
        if x < 0 || z < 0 || x >= nx as i64 || z >= nz as i64 {
            None
        } else {
            Some((x as usize * nz + z as usize, cost))
        }
    })
}

/// 8-connected A* over a boolean blocked grid with a Euclidean heuristic.
pub fn astar_grid(
    blocked: &[bool],
    nx: usize,
    nz: usize,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<GridPath, MetricError> {
    if start.0 >= nx || start.1 >= nz || goal.0 >= nx || goal.1 >= nz {
        return Err(MetricError::CellOutOfBounds);
    }
    let sidx = start.0 * nz + start.1;
    let gidx = goal.0 * nz + goal.1;
    if blocked[sidx] || blocked[gidx] {
        return Err(MetricError::BlockedEndpoint);
    }
    let heuristic = |idx: usize| -> f64 {
        let (cx, cz) = (idx / nz, idx % nz);
        let dx = cx as f64 - goal.0 as f64;
        let dz = cz as f64 - goal.1 as f64;
        (dx * dx + dz * dz).sqrt()
    };
    let mut dist = vec![f64::INFINITY; nx * nz];
    let mut parent = vec![usize::MAX; nx * nz];
    let mut heap = BinaryHeap::new();
    dist[sidx] = 0.0;
    heap.push(HeapEntry {
        f: heuristic(sidx),
        h: heuristic(sidx),
        idx: sidx,
    });
    while let Some(HeapEntry { f, idx, .. }) = heap.pop() {
        if idx == gidx {
            let mut cells = Vec::new();
            let mut cur = gidx;
            while cur != usize::MAX {
                cells.push((cur / nz, cur % nz));
                cur = parent[cur];
            }
            cells.reverse();
            return Ok(GridPath {
                cells,
                cost: dist[gidx],
            });
        }
        if f > dist[idx] + heuristic(idx) + 1e-12 {
            continue; // stale entry
        }
        for (nidx, step) in neighbors(nx, nz, idx) {
            if blocked[nidx] {
                continue;
            }
            let nd = dist[idx] + step;
            if nd + 1e-15 < dist[nidx] {
                dist[nidx] = nd;
                parent[nidx] = idx;
                let h = heuristic(nidx);
                heap.push(HeapEntry {
                    f: nd + h,
                    h,
                    idx: nidx,
                });
            }
        }
    }
    Err(MetricError::NoPath)
}

/// Plans over the rasterized scene at the given resolution.
pub fn astar_plan(
    scene: &Scene,
    start_cell: (usize, usize),
    goal_cell: (usize, usize),
    resolution: f64,
) -> Result<GridPath, MetricError> {
    let grid = rasterize_scene(scene, resolution, 0.0);
    astar_grid(&grid.blocked, grid.nx, grid.nz, start_cell, goal_cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Independent Dijkstra used as the optimality oracle.
    fn dijkstra_cost(
        blocked: &[bool],
        nx: usize,
        nz: usize,
        start: (usize, usize),
        goal: (usize, usize),
    ) -> Option<f64> {
        let sidx = start.0 * nz + start.1;
        let gidx = goal.0 * nz + goal.1;
        if blocked[sidx] || blocked[gidx] {
            return None;
        }
        let mut dist = vec![f64::INFINITY; nx * nz];
        let mut visited = vec![false; nx * nz];
        dist[sidx] = 0.0;
        loop {
            let mut cur = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..dist.len() {
                if !visited[i] && dist[i] < best {
                    best = dist[i];
                    cur = i;
                }
            }
            if cur == usize::MAX {
                return None;
            }
            if cur == gidx {
                return Some(dist[gidx]);
            }
            visited[cur] = true;
            for (n, step) in neighbors(nx, nz, cur) {
                if !blocked[n] && dist[cur] + step < dist[n] {
                    dist[n] = dist[cur] + step;
                }
            }
        }
    }

    #[test]
    fn trivial_paths() {
        let blocked = vec![false; 100];
        let p = astar_grid(&blocked, 10, 10, (3, 4), (3, 4)).unwrap();
        assert_eq!(p.cells, vec![(3, 4)]);
        assert_eq!(p.cost, 0.0);

        // corner to corner on an empty 10x10 grid: a pure diagonal run
        let p = astar_grid(&blocked, 10, 10, (0, 0), (9, 9)).unwrap();
        assert_abs_diff_eq!(p.cost, 9.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn blocked_and_unreachable() {
        let mut blocked = vec![false; 25];
        blocked[2 * 5 + 2] = true;
        assert!(matches!(
            astar_grid(&blocked, 5, 5, (2, 2), (0, 0)),
            Err(MetricError::BlockedEndpoint)
        ));
        // wall across the middle
        for z in 0..5 {
            blocked[2 * 5 + z] = true;
        }
        assert!(matches!(
            astar_grid(&blocked, 5, 5, (0, 0), (4, 4)),
            Err(MetricError::NoPath)
        ));
    }

    #[test]
    fn matches_dijkstra_on_random_grids() {
        let mut rng = crate::rng::stream_rng(101, "astar/dijkstra");
        let mut solved = 0;
        for trial in 0..50 {
            let (nx, nz) = (12, 12);
            let mut blocked = vec![false; nx * nz];
            for b in blocked.iter_mut() {
                *b = rng.gen_bool(0.25);
            }
            let start = (0usize, 0usize);
            let goal = (nx - 1, nz - 1);
            blocked[0] = false;
            blocked[(nx - 1) * nz + nz - 1] = false;
            let oracle = dijkstra_cost(&blocked, nx, nz, start, goal);
            let ours = astar_grid(&blocked, nx, nz, start, goal);
            match (oracle, ours) {
                (Some(c), Ok(p)) => {
                    assert!(
                        (c - p.cost).abs() < 1e-9,
                        "trial {trial}: dijkstra {c} vs astar {}",
                        p.cost
                    );
                    // path connectivity with unit or diagonal steps
                    for w in p.cells.windows(2) {
                        let dx = (w[1].0 as i64 - w[0].0 as i64).abs();
                        let dz = (w[1].1 as i64 - w[0].1 as i64).abs();
                        assert!(dx <= 1 && dz <= 1 && dx + dz > 0);
                    }
                    solved += 1;
                }
                (None, Err(_)) => {}
                (o, r) => panic!("trial {trial}: oracle {o:?} vs ours {:?}", r.map(|p| p.cost)),
            }
        }
        assert!(solved > 20, "enough solvable instances: {solved}");
    }

    #[test]
    fn deterministic_paths() {
        let mut rng = crate::rng::stream_rng(102, "astar/det");
        let (nx, nz) = (15, 15);
        let mut blocked = vec![false; nx * nz];
        for b in blocked.iter_mut() {
            *b = rng.gen_bool(0.2);
        }
        blocked[0] = false;
        blocked[nx * nz - 1] = false;
        let a = astar_grid(&blocked, nx, nz, (0, 0), (14, 14));
        let b = astar_grid(&blocked, nx, nz, (0, 0), (14, 14));
        match (a, b) {
            (Ok(pa), Ok(pb)) => assert_eq!(pa, pb),
            (Err(_), Err(_)) => {}
            _ => panic!("inconsistent"),
        }
    }
}
