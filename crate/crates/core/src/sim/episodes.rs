//! Self-supervised episode collection (sinusoidal steering at constant
//! commanded speed), percentile-based ID/OOD splitting, and the textual
//! dataset format.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::physics::FootprintSample;
use crate::predictor::feature::{extract_feature, FeatureConfig, TerrainFeature};
use crate::sim::{
    ground_truth_traversability, step_bicycle, ControlInput, GroundTruthConfig, RobotParams,
    RobotState, TerrainMap,
};
use crate::{Error, Result, TraversabilitySample};

#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig {
    /// Commanded speed, m/s.
    pub speed: f64,
    /// Sinusoidal steering amplitude, radians.
    pub steer_amp: f64,
    /// Sinusoid period, seconds.
    pub steer_period: f64,
    pub max_steps: usize,
    /// Roll/pitch magnitude treated as a roll-over, radians.
    pub rollover_limit: f64,
    /// Linear traction below this for `immobilized_steps` consecutive steps
    /// ends the episode.
    pub immobilized_traction: f64,
    pub immobilized_steps: usize,
    /// Distance from map edges for spawn poses, meters.
    pub spawn_margin: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            speed: 2.0,
            steer_amp: (25.0f64).to_radians(),
            steer_period: 4.0,
            max_steps: 200,
            rollover_limit: (30.0f64).to_radians(),
            immobilized_traction: 0.05,
            immobilized_steps: 10,
            spawn_margin: 2.5,
        }
    }
}

/// One self-supervised training example.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub feature: TerrainFeature,
    pub target: TraversabilitySample,
    /// Footprint elevation standard deviation, meters.
    pub unevenness: f64,
}

/// Rolls sinusoidal-steering episodes and records (feature, outcome) pairs.
/// Episodes end on roll-over, immobilization, map exit, or the step cap; each
/// episode owns a seeded rng stream so results are independent of scheduling.
pub fn collect_episodes(
    map: &TerrainMap,
    params: &RobotParams,
    gt_cfg: &GroundTruthConfig,
    ep_cfg: &EpisodeConfig,
    feat_cfg: &FeatureConfig,
    n_episodes: usize,
    seed: u64,
) -> Vec<DatasetRecord> {
    let mut records = Vec::new();
    let margin = feat_cfg
        .required_margin(params, map.resolution())
        .max(ep_cfg.spawn_margin.min(2.0));
    for episode in 0..n_episodes {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (xm, ym) = map.size_m();
        let mut state = RobotState {
            x: rng.gen_range(ep_cfg.spawn_margin..xm - ep_cfg.spawn_margin),
            y: rng.gen_range(ep_cfg.spawn_margin..ym - ep_cfg.spawn_margin),
            yaw: rng.gen_range(0.0..std::f64::consts::TAU),
        };
        let mut stuck = 0usize;
        for step in 0..ep_cfg.max_steps {
            let feature = match extract_feature(map, &state, params, feat_cfg) {
                Ok(f) => f,
                Err(_) => break, // map exit
            };
            let psi = match ground_truth_traversability(map, &state, params, gt_cfg, &mut rng) {
                Ok(p) => p,
                Err(_) => break,
            };
            let unevenness = feature.unevenness;
            records.push(DatasetRecord {
                feature,
                target: psi,
                unevenness,
            });

            if psi.roll > ep_cfg.rollover_limit || psi.pitch > ep_cfg.rollover_limit {
                break;
            }
            if psi.lin_traction < ep_cfg.immobilized_traction {
                stuck += 1;
                if stuck >= ep_cfg.immobilized_steps {
                    break;
                }
            } else {
                stuck = 0;
            }

            let t = step as f64 * params.dt;
            let control = ControlInput::clamped(
                ep_cfg.speed,
                ep_cfg.steer_amp * (std::f64::consts::TAU * t / ep_cfg.steer_period).sin(),
                params,
            );
            state = step_bicycle(&state, &control, &psi, params);
            if !map.in_bounds(state.x, state.y, margin) {
                break;
            }
        }
    }
    records
}

/// Nearest-rank percentile of an unsorted sample (pct in (0, 100]).
pub fn percentile_nearest_rank(values: &[f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("percentile of an empty sample"));
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::domain(format!("percentile must be in (0, 100], got {pct}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite unevenness"));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// ID/OOD split by footprint unevenness percentile.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    /// Records at or below this unevenness are in-distribution.
    pub threshold: f64,
    pub train_id: Vec<DatasetRecord>,
    pub val_id: Vec<DatasetRecord>,
    /// Every input record labeled `true` when out-of-distribution.
    pub labeled: Vec<(DatasetRecord, bool)>,
}

/// Splits records at the given unevenness percentile: training and validation
/// keep only ID records (4:1 interleave), while `labeled` keeps everything
/// with its ID/OOD flag. ID uses `<=` so degenerate datasets stay nonempty.
pub fn split_dataset(records: &[DatasetRecord], percentile: f64) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    let unevenness: Vec<f64> = records.iter().map(|r| r.unevenness).collect();
    let threshold = percentile_nearest_rank(&unevenness, percentile)?;
    let labeled = label_ood(records, threshold);
    let id_records: Vec<&DatasetRecord> =
        labeled.iter().filter(|(_, ood)| !ood).map(|(r, _)| r).collect();
    let mut train_id = Vec::new();
    let mut val_id = Vec::new();
    for (i, r) in id_records.iter().enumerate() {
        if i % 5 == 4 {
            val_id.push((*r).clone());
        } else {
            train_id.push((*r).clone());
        }
    }
    Ok(DatasetSplit {
        threshold,
        train_id,
        val_id,
        labeled,
    })
}

/// Labels each record OOD when its unevenness exceeds the threshold.
pub fn label_ood(records: &[DatasetRecord], threshold: f64) -> Vec<(DatasetRecord, bool)> {
    records
        .iter()
        .map(|r| (r.clone(), r.unevenness > threshold))
        .collect()
}

fn push_floats(out: &mut String, values: &[f64]) {
    for v in values {
        out.push(' ');
        out.push_str(&format!("{v}"));
    }
}

/// Writes records as version-headed record-per-line text. Floats use the
/// shortest round-tripping decimal form.
pub fn save_records(path: &Path, records: &[DatasetRecord], patch_cells: usize) -> Result<()> {
    let mut out = String::new();
    out.push_str("evtrav-dataset v1\n");
    out.push_str(&format!("patch_cells {patch_cells}\n"));
    out.push_str(&format!("count {}\n", records.len()));
    for r in records {
        let f = &r.feature;
        let fp = &f.footprint;
        out.push_str("record");
        push_floats(&mut out, &[f.yaw, r.unevenness]);
        push_floats(&mut out, &r.target.values());
        push_floats(&mut out, &fp.slopes);
        push_floats(&mut out, &fp.terrain_heights);
        push_floats(&mut out, &fp.veg_heights);
        push_floats(&mut out, &fp.roll_dists);
        push_floats(&mut out, &fp.pitch_dists);
        push_floats(&mut out, &[fp.dirt_ratio, fp.veg_ratio]);
        push_floats(&mut out, &f.elev_patch);
        push_floats(&mut out, &f.semantic_patch);
        push_floats(&mut out, &f.veg_patch);
        out.push('\n');
    }
    out.push_str("end\n");
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a dataset file back; returns the records and the patch size.
pub fn load_records(path: &Path) -> Result<(Vec<DatasetRecord>, usize)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut lines = text.lines();
    if lines.next() != Some("evtrav-dataset v1") {
        return Err(Error::parse(&p, "expected header 'evtrav-dataset v1'"));
    }
    let patch_cells: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("patch_cells "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(&p, "bad patch_cells line"))?;
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("count "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(&p, "bad count line"))?;
    let pp = patch_cells * patch_cells;
    let expected = 2 + 4 + 4 + 4 + 4 + 2 + 2 + 2 + 3 * pp;

    let mut records = Vec::with_capacity(count);
    for line in lines {
        if line == "end" {
            break;
        }
        let rest = line
            .strip_prefix("record")
            .ok_or_else(|| Error::parse(&p, format!("unexpected line '{line}'")))?;
        let vals: Vec<f64> = rest
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(&p, format!("bad float '{t}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::parse(
                &p,
                format!("record has {} fields, expected {expected}", vals.len()),
            ));
        }
        let mut it = vals.into_iter();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let head = take(2);
        let (yaw, unevenness) = (head[0], head[1]);
        let t = take(4);
        let target = TraversabilitySample {
            lin_traction: t[0],
            ang_traction: t[1],
            roll: t[2],
            pitch: t[3],
        };
        let slopes: [f64; 4] = take(4).try_into().expect("4 slopes");
        let terrain_heights: [f64; 4] = take(4).try_into().expect("4 heights");
        let veg_heights: [f64; 4] = take(4).try_into().expect("4 veg heights");
        let roll_dists: [f64; 2] = take(2).try_into().expect("2 roll dists");
        let pitch_dists: [f64; 2] = take(2).try_into().expect("2 pitch dists");
        let ratios = take(2);
        let elev_patch = take(pp);
        let semantic_patch = take(pp);
        let veg_patch = take(pp);
        records.push(DatasetRecord {
            feature: TerrainFeature {
                elev_patch,
                semantic_patch,
                veg_patch,
                footprint: FootprintSample {
                    slopes,
                    terrain_heights,
                    veg_heights,
                    roll_dists,
                    pitch_dists,
                    dirt_ratio: ratios[0],
                    veg_ratio: ratios[1],
                },
                yaw,
                unevenness,
            },
            target,
            unevenness,
        });
    }
    if records.len() != count {
        return Err(Error::parse(
            &p,
            format!("dataset has {} records, header says {count}", records.len()),
        ));
    }
    Ok((records, patch_cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MapGenConfig;

    fn flat_map() -> TerrainMap {
        TerrainMap::generate(&MapGenConfig {
            scale: 0.0,
            ..Default::default()
        })
    }

    fn collect_flat(n: usize) -> Vec<DatasetRecord> {
        collect_episodes(
            &flat_map(),
            &RobotParams::default(),
            &GroundTruthConfig::default(),
            &EpisodeConfig::default(),
            &FeatureConfig::default(),
            n,
            7,
        )
    }

    #[test]
    fn flat_map_has_no_rollovers_and_every_episode_records() {
        let ep = EpisodeConfig::default();
        let records = collect_flat(20);
        assert!(records.len() >= 20, "at least one record per episode");
        for r in &records {
            assert!(r.target.roll <= ep.rollover_limit);
            assert!(r.target.pitch <= ep.rollover_limit);
        }
    }

    #[test]
    fn record_count_grows_with_episode_count() {
        let a = collect_flat(5).len();
        let b = collect_flat(10).len();
        let c = collect_flat(20).len();
        assert!(a <= b && b <= c, "{a} {b} {c}");
    }

    #[test]
    fn collection_is_deterministic_per_seed() {
        let a = collect_flat(5);
        let b = collect_flat(5);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn trajectories_terminate_inside_the_map() {
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 13,
            ..Default::default()
        });
        let params = RobotParams::default();
        let feat_cfg = FeatureConfig::default();
        // every recorded feature was extracted successfully, which bounds the
        // pose by the patch margin
        let records = collect_episodes(
            &map,
            &params,
            &GroundTruthConfig::default(),
            &EpisodeConfig::default(),
            &feat_cfg,
            10,
            3,
        );
        assert!(!records.is_empty());
    }

    fn rec_with_unevenness(u: f64) -> DatasetRecord {
        let mut recs = collect_flat(1);
        let mut r = recs.remove(0);
        r.unevenness = u;
        r.feature.unevenness = u;
        r
    }

    #[test]
    fn split_uses_inclusive_threshold_on_degenerate_data() {
        let records: Vec<DatasetRecord> = (0..10).map(|_| rec_with_unevenness(0.4)).collect();
        let split = split_dataset(&records, 50.0).unwrap();
        assert_eq!(split.threshold, 0.4);
        // `<=` keeps every identical record in-distribution
        assert_eq!(split.train_id.len() + split.val_id.len(), 10);
        assert!(split.labeled.iter().all(|(_, ood)| !ood));
    }

    #[test]
    fn split_halves_uniformly_spread_data() {
        let records: Vec<DatasetRecord> =
            (0..100).map(|i| rec_with_unevenness(i as f64 / 100.0)).collect();
        let split = split_dataset(&records, 50.0).unwrap();
        let id = split.labeled.iter().filter(|(_, ood)| !ood).count();
        assert!((id as i64 - 50).abs() <= 1, "id count {id}");
        // train/val interleave is 4:1
        assert_eq!(split.train_id.len(), 40);
        assert_eq!(split.val_id.len(), 10);
    }

    #[test]
    fn percentile_100_marks_everything_id() {
        let records: Vec<DatasetRecord> =
            (0..30).map(|i| rec_with_unevenness(i as f64)).collect();
        let split = split_dataset(&records, 100.0).unwrap();
        assert!(split.labeled.iter().all(|(_, ood)| !ood));
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(split_dataset(&[], 50.0).is_err());
    }

    #[test]
    fn doubled_scale_raises_median_footprint_unevenness() {
        let params = RobotParams::default();
        let gt = GroundTruthConfig::default();
        let ep = EpisodeConfig::default();
        let feat = FeatureConfig::default();
        let median = |scale: f64| -> f64 {
            let mut u: Vec<f64> = (0..3u64)
                .flat_map(|i| {
                    let map = TerrainMap::generate(&MapGenConfig {
                        seed: 40 + i,
                        scale,
                        ..Default::default()
                    });
                    collect_episodes(&map, &params, &gt, &ep, &feat, 5, 300 + i)
                })
                .map(|r| r.unevenness)
                .collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            u[u.len() / 2]
        };
        let base = median(1.0);
        let doubled = median(2.0);
        assert!(
            doubled > base,
            "median unevenness must rise with scale: {base} vs {doubled}"
        );
    }

    #[test]
    fn dataset_round_trips_losslessly() {
        let dir = std::env::temp_dir().join("evtrav-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.ds");
        let records = collect_episodes(
            &TerrainMap::generate(&MapGenConfig {
                seed: 2,
                veg_fraction: 0.2,
                ..Default::default()
            }),
            &RobotParams::default(),
            &GroundTruthConfig::default(),
            &EpisodeConfig::default(),
            &FeatureConfig::default(),
            3,
            11,
        );
        assert!(!records.is_empty());
        save_records(&path, &records, 5).unwrap();
        let (back, patch_cells) = load_records(&path).unwrap();
        assert_eq!(patch_cells, 5);
        assert_eq!(records.len(), back.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a, b);
        }
    }
}
