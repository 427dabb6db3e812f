//! Synthetic uneven terrain: diamond-square fractal heightmaps normalized to
//! a target elevation spread, vegetation patches, bilinear sampling, and a
//! textual grid format that round-trips losslessly.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantic {
    Dirt,
    Veg,
}

/// Terrain generation parameters; elevation standard deviation scales
/// linearly with `scale`.
#[derive(Debug, Clone, Copy)]
pub struct MapGenConfig {
    pub seed: u64,
    /// Side length, meters.
    pub size_m: f64,
    /// Meters per grid cell.
    pub resolution: f64,
    /// Unevenness multiplier; the elevation std is `scale * base_std`.
    pub scale: f64,
    /// Elevation std at scale 1.
    pub base_std: f64,
    /// Approximate fraction of cells covered by vegetation.
    pub veg_fraction: f64,
    /// Tallest vegetation, meters.
    pub veg_height_max: f64,
    /// Diamond-square amplitude decay per level, in (0, 1).
    pub roughness: f64,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        MapGenConfig {
            seed: 0,
            size_m: 25.0,
            resolution: 0.25,
            scale: 1.0,
            base_std: 0.15,
            veg_fraction: 0.0,
            veg_height_max: 0.2,
            roughness: 0.55,
        }
    }
}

/// A 2.5D world: node-centered elevation grid plus per-node semantics and
/// vegetation heights. Node `(r, c)` sits at world `(x, y) = (c, r) * res`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMap {
    resolution: f64,
    rows: usize,
    cols: usize,
    elevation: Vec<f64>,
    semantic: Vec<Semantic>,
    veg_height: Vec<f64>,
    seed: u64,
    scale: f64,
}

impl TerrainMap {
    /// Deterministic terrain synthesis from the generation config.
    pub fn generate(cfg: &MapGenConfig) -> TerrainMap {
        let nodes = (cfg.size_m / cfg.resolution).round() as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let mut elevation = diamond_square(nodes, cfg.roughness, &mut rng);
        normalize_std(&mut elevation, cfg.scale * cfg.base_std);

        let mut semantic = vec![Semantic::Dirt; nodes * nodes];
        let mut veg_height = vec![0.0; nodes * nodes];
        if cfg.veg_fraction > 0.0 {
            grow_veg_blobs(
                nodes,
                cfg.veg_fraction,
                cfg.veg_height_max,
                &mut semantic,
                &mut veg_height,
                &mut rng,
            );
        }

        TerrainMap {
            resolution: cfg.resolution,
            rows: nodes,
            cols: nodes,
            elevation,
            semantic,
            veg_height,
            seed: cfg.seed,
            scale: cfg.scale,
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// World extent: `(x_max, y_max)` with the origin at `(0, 0)`.
    pub fn size_m(&self) -> (f64, f64) {
        (
            (self.cols - 1) as f64 * self.resolution,
            (self.rows - 1) as f64 * self.resolution,
        )
    }

    pub fn in_bounds(&self, x: f64, y: f64, margin: f64) -> bool {
        let (xm, ym) = self.size_m();
        x >= margin && y >= margin && x <= xm - margin && y <= ym - margin
    }

    fn node(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn elevation_node(&self, r: usize, c: usize) -> f64 {
        self.elevation[self.node(r, c)]
    }

    pub fn semantic_node(&self, r: usize, c: usize) -> Semantic {
        self.semantic[self.node(r, c)]
    }

    pub fn veg_height_node(&self, r: usize, c: usize) -> f64 {
        self.veg_height[self.node(r, c)]
    }

    fn bilinear(&self, grid: &[f64], x: f64, y: f64) -> f64 {
        let fx = (x / self.resolution).clamp(0.0, (self.cols - 1) as f64);
        let fy = (y / self.resolution).clamp(0.0, (self.rows - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.cols - 2);
        let r0 = (fy.floor() as usize).min(self.rows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let g = |r: usize, c: usize| grid[r * self.cols + c];
        g(r0, c0) * (1.0 - tx) * (1.0 - ty)
            + g(r0, c0 + 1) * tx * (1.0 - ty)
            + g(r0 + 1, c0) * (1.0 - tx) * ty
            + g(r0 + 1, c0 + 1) * tx * ty
    }

    /// Bilinear terrain height; coordinates clamp to the map boundary.
    pub fn elevation_at(&self, x: f64, y: f64) -> f64 {
        self.bilinear(&self.elevation, x, y)
    }

    pub fn veg_height_at(&self, x: f64, y: f64) -> f64 {
        self.bilinear(&self.veg_height, x, y)
    }

    /// Nearest-node semantic class.
    pub fn semantic_at(&self, x: f64, y: f64) -> Semantic {
        let c = ((x / self.resolution).round().max(0.0) as usize).min(self.cols - 1);
        let r = ((y / self.resolution).round().max(0.0) as usize).min(self.rows - 1);
        self.semantic[self.node(r, c)]
    }

    /// Standard deviation of all node elevations.
    pub fn elevation_std(&self) -> f64 {
        std_dev(&self.elevation)
    }

    pub fn veg_cell_fraction(&self) -> f64 {
        let veg = self.semantic.iter().filter(|s| **s == Semantic::Veg).count();
        veg as f64 / self.semantic.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("evtrav-terrain v1\n");
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("scale {}\n", self.scale));
        out.push_str(&format!("resolution {}\n", self.resolution));
        out.push_str(&format!("rows {}\n", self.rows));
        out.push_str(&format!("cols {}\n", self.cols));
        out.push_str("elevation\n");
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| format!("{}", self.elevation[self.node(r, c)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("semantic\n");
        for r in 0..self.rows {
            let row: String = (0..self.cols)
                .map(|c| match self.semantic[self.node(r, c)] {
                    Semantic::Dirt => 'd',
                    Semantic::Veg => 'v',
                })
                .collect();
            out.push_str(&row);
            out.push('\n');
        }
        out.push_str("veg_height\n");
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| format!("{}", self.veg_height[self.node(r, c)]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<TerrainMap> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let p = path.display().to_string();
        let mut lines = text.lines();
        if lines.next() != Some("evtrav-terrain v1") {
            return Err(Error::parse(&p, "expected header 'evtrav-terrain v1'"));
        }
        let mut header = std::collections::BTreeMap::new();
        for _ in 0..5 {
            let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated header"))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(&p, format!("bad header line '{line}'")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<&String> {
            header.get(k).ok_or_else(|| Error::parse(&p, format!("missing header '{k}'")))
        };
        let seed: u64 = get("seed")?.parse().map_err(|_| Error::parse(&p, "bad seed"))?;
        let scale: f64 = get("scale")?.parse().map_err(|_| Error::parse(&p, "bad scale"))?;
        let resolution: f64 =
            get("resolution")?.parse().map_err(|_| Error::parse(&p, "bad resolution"))?;
        let rows: usize = get("rows")?.parse().map_err(|_| Error::parse(&p, "bad rows"))?;
        let cols: usize = get("cols")?.parse().map_err(|_| Error::parse(&p, "bad cols"))?;

        let expect = |lines: &mut std::str::Lines<'_>, tag: &str| -> Result<()> {
            if lines.next() == Some(tag) {
                Ok(())
            } else {
                Err(Error::parse(&p, format!("expected section '{tag}'")))
            }
        };
        let parse_grid = |lines: &mut std::str::Lines<'_>| -> Result<Vec<f64>> {
            let mut grid = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated grid"))?;
                for tok in line.split_ascii_whitespace() {
                    grid.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::parse(&p, format!("bad value '{tok}'")))?,
                    );
                }
            }
            if grid.len() != rows * cols {
                return Err(Error::parse(&p, "grid size mismatch"));
            }
            Ok(grid)
        };

        expect(&mut lines, "elevation")?;
        let elevation = parse_grid(&mut lines)?;
        expect(&mut lines, "semantic")?;
        let mut semantic = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated semantics"))?;
            for ch in line.chars() {
                semantic.push(match ch {
                    'd' => Semantic::Dirt,
                    'v' => Semantic::Veg,
                    other => return Err(Error::parse(&p, format!("bad semantic '{other}'"))),
                });
            }
        }
        if semantic.len() != rows * cols {
            return Err(Error::parse(&p, "semantic size mismatch"));
        }
        expect(&mut lines, "veg_height")?;
        let veg_height = parse_grid(&mut lines)?;
        expect(&mut lines, "end")?;

        Ok(TerrainMap {
            resolution,
            rows,
            cols,
            elevation,
            semantic,
            veg_height,
            seed,
            scale,
        })
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Shifts to zero mean and rescales to the target standard deviation; a zero
/// target (or a degenerate field) flattens the map.
fn normalize_std(grid: &mut [f64], target_std: f64) {
    let n = grid.len() as f64;
    let mean = grid.iter().sum::<f64>() / n;
    let std = std_dev(grid);
    if target_std <= 0.0 || std <= 1e-12 {
        grid.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let k = target_std / std;
    grid.iter_mut().for_each(|v| *v = (*v - mean) * k);
}

/// Non-wrapping diamond-square over the smallest power-of-two-plus-one grid
/// covering `nodes`, cropped to `nodes x nodes`.
fn diamond_square(nodes: usize, roughness: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut size = 1usize;
    while size + 1 < nodes {
        size <<= 1;
    }
    let dim = size + 1;
    let mut grid = vec![0.0f64; dim * dim];
    let at = |r: usize, c: usize| r * dim + c;

    for &(r, c) in &[(0, 0), (0, size), (size, 0), (size, size)] {
        grid[at(r, c)] = rng.gen_range(-1.0..1.0);
    }

    let mut step = size;
    let mut amp = 1.0;
    while step > 1 {
        let half = step / 2;
        // diamond: centers of each square
        for r in (half..dim).step_by(step) {
            for c in (half..dim).step_by(step) {
                let avg = (grid[at(r - half, c - half)]
                    + grid[at(r - half, c + half)]
                    + grid[at(r + half, c - half)]
                    + grid[at(r + half, c + half)])
                    / 4.0;
                grid[at(r, c)] = avg + rng.gen_range(-amp..amp);
            }
        }
        // square: edge midpoints, averaging available neighbors
        for r in (0..dim).step_by(half) {
            let c0 = if (r / half) % 2 == 0 { half } else { 0 };
            for c in (c0..dim).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                if r >= half {
                    sum += grid[at(r - half, c)];
                    cnt += 1.0;
                }
                if r + half < dim {
                    sum += grid[at(r + half, c)];
                    cnt += 1.0;
                }
                if c >= half {
                    sum += grid[at(r, c - half)];
                    cnt += 1.0;
                }
                if c + half < dim {
                    sum += grid[at(r, c + half)];
                    cnt += 1.0;
                }
                grid[at(r, c)] = sum / cnt + rng.gen_range(-amp..amp);
            }
        }
        step = half;
        amp *= roughness;
    }

    let mut out = Vec::with_capacity(nodes * nodes);
    for r in 0..nodes {
        for c in 0..nodes {
            out.push(grid[at(r, c)]);
        }
    }
    out
}

/// Stamps smooth circular vegetation patches until roughly `fraction` of the
/// cells carry vegetation.
fn grow_veg_blobs(
    nodes: usize,
    fraction: f64,
    height_max: f64,
    semantic: &mut [Semantic],
    veg_height: &mut [f64],
    rng: &mut ChaCha8Rng,
) {
    let total = nodes * nodes;
    let target = (fraction.clamp(0.0, 1.0) * total as f64).round() as usize;
    let mut covered = 0usize;
    let mut guard = 0;
    while covered < target && guard < 10_000 {
        guard += 1;
        let cr = rng.gen_range(0..nodes) as f64;
        let cc = rng.gen_range(0..nodes) as f64;
        let radius = rng.gen_range(2.0..6.0);
        let peak = rng.gen_range(0.3..1.0) * height_max;
        let r_lo = ((cr - radius).floor().max(0.0)) as usize;
        let r_hi = ((cr + radius).ceil() as usize).min(nodes - 1);
        let c_lo = ((cc - radius).floor().max(0.0)) as usize;
        let c_hi = ((cc + radius).ceil() as usize).min(nodes - 1);
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                let d2 = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)) / (radius * radius);
                if d2 <= 1.0 {
                    let idx = r * nodes + c;
                    if semantic[idx] == Semantic::Dirt {
                        semantic[idx] = Semantic::Veg;
                        covered += 1;
                    }
                    veg_height[idx] = veg_height[idx].max(peak * (1.0 - d2));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_is_flat() {
        let map = TerrainMap::generate(&MapGenConfig {
            scale: 0.0,
            ..Default::default()
        });
        assert!(map.elevation.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn same_seed_same_map() {
        let cfg = MapGenConfig {
            seed: 42,
            veg_fraction: 0.2,
            ..Default::default()
        };
        let a = TerrainMap::generate(&cfg);
        let b = TerrainMap::generate(&cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn scale_doubles_elevation_std() {
        for seed in 0..10 {
            let one = TerrainMap::generate(&MapGenConfig {
                seed,
                scale: 1.0,
                ..Default::default()
            });
            let two = TerrainMap::generate(&MapGenConfig {
                seed,
                scale: 2.0,
                ..Default::default()
            });
            let ratio = two.elevation_std() / one.elevation_std();
            assert!((1.8..=2.2).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn veg_fraction_is_approximately_honored() {
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 7,
            veg_fraction: 0.3,
            ..Default::default()
        });
        let f = map.veg_cell_fraction();
        assert!((f - 0.3).abs() < 0.05, "veg fraction {f}");
        // vegetation height is zero on dirt
        for i in 0..map.semantic.len() {
            if map.semantic[i] == Semantic::Dirt {
                assert_eq!(map.veg_height[i], 0.0);
            }
        }
    }

    #[test]
    fn bilinear_reproduces_planar_fields_exactly() {
        let mut map = TerrainMap::generate(&MapGenConfig::default());
        for r in 0..map.rows {
            for c in 0..map.cols {
                let (x, y) = (c as f64 * map.resolution, r as f64 * map.resolution);
                map.elevation[r * map.cols + c] = 0.3 * x - 0.7 * y + 2.0;
            }
        }
        for &(x, y) in &[(0.13, 0.71), (3.77, 9.02), (24.9, 0.05), (12.5, 12.5)] {
            let want = 0.3 * x - 0.7 * y + 2.0;
            assert!((map.elevation_at(x, y) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("evtrav-terrain-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("map.tmap");
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 3,
            veg_fraction: 0.15,
            ..Default::default()
        });
        map.save(&path).unwrap();
        let back = TerrainMap::load(&path).unwrap();
        assert_eq!(map, back);

        // byte-identical on re-save
        let path2 = dir.join("map2.tmap");
        back.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
