use super::patch::PatchMap;
use super::{Point, DEDUP_TOLERANCE};

/// Stencil points of all patches at a dyadic level, deduplicated across patch seams.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementGrid {
    level: u32,
    patch_count: usize,
    points: Vec<Point>,
    /// `patch * (n+1)^2 + l + (n+1) * l'` -> global point index, `n = 2^j`.
    grid: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl ElementGrid {
    /// Builds a grid from raw (duplicated) per-patch stencil points.
    pub fn from_raw_points(level: u32, patch_count: usize, raw: Vec<Point>) -> Self {
        let n = 1usize << level;
        assert_eq!(raw.len(), patch_count * (n + 1) * (n + 1));
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[a][0].total_cmp(&raw[b][0]).then(a.cmp(&b)));
        let mut parent: Vec<usize> = (0..raw.len()).collect();
        for (pos, &a) in order.iter().enumerate() {
            for &b in &order[pos + 1..] {
                if raw[b][0] - raw[a][0] > DEDUP_TOLERANCE {
                    break;
                }
                if (raw[a] - raw[b]).norm() < DEDUP_TOLERANCE {
                    let ra = find(&mut parent, a);
                    let rb = find(&mut parent, b);
                    if ra != rb {
                        // keep the smallest raw index as representative
                        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                        parent[hi] = lo;
                    }
                }
            }
        }
        let mut global = vec![usize::MAX; raw.len()];
        let mut points = Vec::new();
        let mut grid = Vec::with_capacity(raw.len());
        for i in 0..raw.len() {
            let r = find(&mut parent, i);
            if global[r] == usize::MAX {
                global[r] = points.len();
                points.push(raw[r]);
            }
            grid.push(global[r]);
        }
        ElementGrid {
            level,
            patch_count,
            points,
            grid,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    /// Number of elements per patch edge, `2^j`.
    pub fn subdivisions(&self) -> usize {
        1 << self.level
    }

    pub fn element_count(&self) -> usize {
        self.patch_count << (2 * self.level)
    }

    /// Deduplicated global stencil points.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Global index of stencil point `(l, l')` of a patch.
    pub fn global_index(&self, patch: usize, l: usize, lp: usize) -> usize {
        let m = self.subdivisions() + 1;
        self.grid[patch * m * m + l + m * lp]
    }

    /// Per-patch map from local stencil position to global index.
    pub fn raw_to_global(&self) -> &[usize] {
        &self.grid
    }

    /// Element index to `(patch, k, k')`.
    pub fn element_position(&self, e: usize) -> (usize, usize, usize) {
        let n = self.subdivisions();
        let per = n * n;
        let r = e % per;
        (e / per, r % n, r / n)
    }

    pub fn element_index(&self, patch: usize, k: usize, kp: usize) -> usize {
        let n = self.subdivisions();
        patch * n * n + k + n * kp
    }

    /// Global indices of the element corners in the order
    /// `(0,0), (1,0), (0,1), (1,1)` of local coordinates.
    pub fn element_corners(&self, e: usize) -> [usize; 4] {
        let (p, k, kp) = self.element_position(e);
        [
            self.global_index(p, k, kp),
            self.global_index(p, k + 1, kp),
            self.global_index(p, k, kp + 1),
            self.global_index(p, k + 1, kp + 1),
        ]
    }

    /// Same topology with moved points.
    pub fn with_points(&self, points: Vec<Point>) -> Self {
        assert_eq!(points.len(), self.points.len());
        ElementGrid {
            points,
            ..self.clone()
        }
    }
}

/// Samples every patch at `xi = 2^-j (l, l')` and deduplicates shared points.
pub fn refine_to_level(maps: &[PatchMap], level: u32) -> ElementGrid {
    let n = 1usize << level;
    let mut raw = Vec::with_capacity(maps.len() * (n + 1) * (n + 1));
    for map in maps {
        for lp in 0..=n {
            for l in 0..=n {
                raw.push(map.eval(l as f64 / n as f64, lp as f64 / n as f64));
            }
        }
    }
    ElementGrid::from_raw_points(level, maps.len(), raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_primitive, Primitive};

    #[test]
    fn sphere_counts() {
        let maps = generate_primitive(&Primitive::Sphere {
            center: [0.0; 3],
            radius: 0.3,
        })
        .unwrap();
        for j in 0..5 {
            let g = refine_to_level(&maps, j);
            let n = 1usize << j;
            assert_eq!(g.element_count(), 6 * n * n);
            // closed genus-0 quad mesh: V = 6 n^2 + 2
            assert_eq!(g.points().len(), 6 * n * n + 2);
        }
    }

    #[test]
    fn level_zero_has_corner_points() {
        let maps = generate_primitive(&Primitive::Cube {
            center: [0.0; 3],
            half_width: 0.15,
        })
        .unwrap();
        let g = refine_to_level(&maps, 0);
        assert_eq!(g.element_count(), 6);
        assert_eq!(g.points().len(), 8);
    }

    #[test]
    fn two_body_components_are_separate() {
        let maps = generate_primitive(&Primitive::two_body()).unwrap();
        let g = refine_to_level(&maps, 2);
        assert_eq!(g.points().len(), 2 * (6 * 16 + 2));
        assert_eq!(g.element_count(), 12 * 16);
    }
}
