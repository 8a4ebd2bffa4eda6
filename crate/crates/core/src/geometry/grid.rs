use std::collections::HashMap;

use super::vec3::{self, Vec3};

/// Uniform hash grid over a point cloud for neighbour queries.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    points: Vec<Vec3>,
    alive: Vec<bool>,
    live: usize,
}

impl GridIndex {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut g = Self {
            cell,
            cells: HashMap::new(),
            points: Vec::with_capacity(points.len()),
            alive: Vec::with_capacity(points.len()),
            live: 0,
        };
        for &p in points {
            g.insert(p);
        }
        g
    }

    pub fn empty(cell: f64) -> Self {
        Self::new(&[], cell)
    }

    fn key(&self, p: Vec3) -> [i64; 3] {
        p.map(|v| (v / self.cell).floor() as i64)
    }

    pub fn insert(&mut self, p: Vec3) -> usize {
        let id = self.points.len();
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
        self.points.push(p);
        self.alive.push(true);
        self.live += 1;
        id
    }

    pub fn remove(&mut self, id: usize) {
        if !self.alive[id] {
            return;
        }
        let k = self.key(self.points[id]);
        if let Some(v) = self.cells.get_mut(&k) {
            v.retain(|&j| j != id);
        }
        self.alive[id] = false;
        self.live -= 1;
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn point(&self, id: usize) -> Vec3 {
        self.points[id]
    }

    /// True if some live point lies strictly closer than `r` to `p`.
    pub fn any_within(&self, p: Vec3, r: f64) -> bool {
        let reach = (r / self.cell).ceil() as i64;
        let k = self.key(p);
        let r2 = r * r;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if v.iter().any(|&j| vec3::dist2(p, self.points[j]) < r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Nearest live point to `p`, skipping `exclude`. Returns `(id, distance)`.
    pub fn nearest(&self, p: Vec3, exclude: Option<usize>) -> Option<(usize, f64)> {
        let available = self.live - exclude.map_or(0, |e| usize::from(self.alive[e]));
        if available == 0 {
            return None;
        }
        let k = self.key(p);
        let mut best: Option<(usize, f64)> = None;
        let mut ring: i64 = 0;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in v {
                                if Some(j) == exclude {
                                    continue;
                                }
                                let d2 = vec3::dist2(p, self.points[j]);
                                if best.map_or(true, |(bj, bd)| d2 < bd || (d2 == bd && j < bj)) {
                                    best = Some((j, d2));
                                }
                            }
                        }
                    }
                }
            }
            // every unvisited cell is at least `ring * cell` away
            if let Some((_, d2)) = best {
                let r = ring as f64 * self.cell;
                if r * r >= d2 {
                    break;
                }
            }
            ring += 1;
        }
        best.map(|(j, d2)| (j, d2.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<Vec3> = (0..300)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin(), (t * 0.91).cos(), (t * 0.13).sin() * 0.5]
            })
            .collect();
        let g = GridIndex::new(&pts, 0.07);
        for q in [[0.1, 0.2, 0.0], [3.0, 3.0, 3.0], [-0.5, 0.9, 0.2]] {
            let (j, d) = g.nearest(q, None).unwrap();
            let bf = pts
                .iter()
                .map(|&p| vec3::dist(p, q))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d, bf);
            assert_eq!(vec3::dist(pts[j], q), bf);
        }
        let (j, _) = g.nearest(pts[5], Some(5)).unwrap();
        assert_ne!(j, 5);
    }

    #[test]
    fn removal_hides_points() {
        let mut g = GridIndex::new(&[[0.0; 3], [1.0, 0.0, 0.0]], 0.5);
        g.remove(0);
        assert_eq!(g.nearest([0.0; 3], None).unwrap().0, 1);
        g.remove(1);
        assert!(g.nearest([0.0; 3], None).is_none());
    }
}
