//! Error sweeps over the frame window, the noise factor and the lidar
//! model, reported as raw per-run CSV plus per-cell quartiles.

use std::fmt::Write as _;

use velostereo_core::sim::{CameraSpec, LidarSpec, NoiseModel};

use crate::experiment::{Runner, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Window,
    Noise,
    Device,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Window => "window",
            SweepKind::Noise => "noise",
            SweepKind::Device => "device",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "window" => Some(SweepKind::Window),
            "noise" => Some(SweepKind::Noise),
            "device" => Some(SweepKind::Device),
            _ => None,
        }
    }
}

pub const WINDOWS: [usize; 6] = [1, 5, 10, 20, 30, 40];
pub const NOISE_FACTORS: [f64; 3] = [1.0, 2.0, 3.0];
pub const LAYER_COUNTS: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub settings: Vec<u8>,
    pub seeds: Vec<u64>,
    pub camera: CameraSpec,
    /// Window sizes of the window sweep.
    pub windows: Vec<usize>,
    /// Noise factors of the noise sweep.
    pub factors: Vec<f64>,
    /// Layer counts of the device sweep.
    pub layers: Vec<usize>,
    /// Frames per run of the noise and device sweeps.
    pub frames: usize,
    /// Noise factor of the window and device sweeps.
    pub base_factor: f64,
}

impl SweepSpec {
    pub fn new(kind: SweepKind) -> Self {
        Self {
            kind,
            settings: velostereo_core::sim::SETTING_IDS.to_vec(),
            seeds: vec![0, 1, 2],
            camera: CameraSpec::default(),
            windows: WINDOWS.to_vec(),
            factors: NOISE_FACTORS.to_vec(),
            layers: LAYER_COUNTS.to_vec(),
            frames: 30,
            base_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: String,
    pub seed: u64,
    pub setting: u8,
    /// `None` when calibration failed.
    pub e_t: Option<f64>,
    pub e_r: Option<f64>,
    pub frames_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    /// Cell labels in sweep order.
    pub cells: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("layer count {0} has no lidar preset (use 16, 32 or 64)")]
    UnknownLayers(usize),
    #[error("sweep has no {0}")]
    Empty(&'static str),
}

fn trial(setting: u8, lidar: LidarSpec, camera: CameraSpec, factor: f64, seed: u64, frames: usize) -> Trial {
    Trial {
        setting,
        lidar,
        camera,
        noise: NoiseModel::with_factor(factor),
        seed,
        frames,
    }
}

fn row(cell: &str, setting: u8, seed: u64, outcome: &crate::experiment::Outcome) -> SweepRow {
    SweepRow {
        cell: cell.to_string(),
        seed,
        setting,
        e_t: outcome.errors.map(|e| e.e_t),
        e_r: outcome.errors.map(|e| e.e_r),
        frames_used: outcome.frames_used(),
    }
}

/// Runs every (setting, seed, cell) combination. Failed calibrations (and
/// scenes that cannot be built) become rows with missing errors.
pub fn run_sweep(spec: &SweepSpec, runner: &mut Runner) -> Result<SweepReport, SweepError> {
    if spec.settings.is_empty() {
        return Err(SweepError::Empty("settings"));
    }
    if spec.seeds.is_empty() {
        return Err(SweepError::Empty("seeds"));
    }
    let vlp16 = LidarSpec::vlp16();
    let cells: Vec<String> = match spec.kind {
        SweepKind::Window => spec.windows.iter().map(|n| n.to_string()).collect(),
        SweepKind::Noise => spec.factors.iter().map(|k| k.to_string()).collect(),
        SweepKind::Device => spec.layers.iter().map(|l| l.to_string()).collect(),
    };
    if cells.is_empty() {
        return Err(SweepError::Empty("cells"));
    }
    let lidars = spec
        .layers
        .iter()
        .map(|&l| LidarSpec::from_layers(l).ok_or(SweepError::UnknownLayers(l)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut indexed: Vec<(usize, SweepRow)> = Vec::new();
    let failed = |cell: &str, setting: u8, seed: u64| SweepRow {
        cell: cell.to_string(),
        seed,
        setting,
        e_t: None,
        e_r: None,
        frames_used: 0,
    };
    for &setting in &spec.settings {
        for &seed in &spec.seeds {
            match spec.kind {
                SweepKind::Window => {
                    let longest = spec.windows.iter().copied().max().unwrap_or(0);
                    let t = trial(setting, vlp16, spec.camera, spec.base_factor, seed, longest);
                    match runner.detect(&t) {
                        Ok(d) => {
                            for (i, &n) in spec.windows.iter().enumerate() {
                                indexed.push((i, row(&cells[i], setting, seed, &d.calibrate_prefix(n))));
                            }
                        }
                        Err(_) => indexed.extend(cells.iter().enumerate().map(|(i, c)| (i, failed(c, setting, seed)))),
                    }
                }
                SweepKind::Noise => {
                    for (i, &k) in spec.factors.iter().enumerate() {
                        let t = trial(setting, vlp16, spec.camera, k, seed, spec.frames);
                        let r = match runner.detect(&t) {
                            Ok(d) => row(&cells[i], setting, seed, &d.calibrate()),
                            Err(_) => failed(&cells[i], setting, seed),
                        };
                        indexed.push((i, r));
                    }
                }
                SweepKind::Device => {
                    for (i, lidar) in lidars.iter().enumerate() {
                        let t = trial(setting, *lidar, spec.camera, spec.base_factor, seed, spec.frames);
                        let r = match runner.detect(&t) {
                            Ok(d) => row(&cells[i], setting, seed, &d.calibrate()),
                            Err(_) => failed(&cells[i], setting, seed),
                        };
                        indexed.push((i, r));
                    }
                }
            }
        }
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(SweepReport {
        kind: spec.kind,
        cells,
        rows: indexed.into_iter().map(|(_, r)| r).collect(),
    })
}

pub const CSV_HEADER: &str = "sweep,cell,seed,setting,e_t,e_r,frames_used";
pub const QUARTILE_HEADER: &str = "sweep,cell,setting,runs,missing,e_t_q1,e_t_median,e_t_q3,e_r_q1,e_r_median,e_r_q3";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Linearly interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.kind.as_str(),
                r.cell,
                r.seed,
                r.setting,
                opt(r.e_t),
                opt(r.e_r),
                r.frames_used
            );
        }
        out
    }

    /// Quartiles per cell over all runs (`setting` = `all`) and per cell and
    /// setting.
    pub fn quartiles_csv(&self) -> String {
        let mut out = String::from(QUARTILE_HEADER);
        out.push('\n');
        let mut settings: Vec<u8> = self.rows.iter().map(|r| r.setting).collect();
        settings.sort_unstable();
        settings.dedup();
        for cell in &self.cells {
            let groups = std::iter::once(None).chain(settings.iter().map(|&s| Some(s)));
            for group in groups {
                let rows: Vec<&SweepRow> = self
                    .rows
                    .iter()
                    .filter(|r| &r.cell == cell && group.is_none_or(|s| r.setting == s))
                    .collect();
                let mut et: Vec<f64> = rows.iter().filter_map(|r| r.e_t).collect();
                let mut er: Vec<f64> = rows.iter().filter_map(|r| r.e_r).collect();
                et.sort_by(f64::total_cmp);
                er.sort_by(f64::total_cmp);
                let label = group.map(|s| s.to_string()).unwrap_or_else(|| "all".into());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    self.kind.as_str(),
                    cell,
                    label,
                    rows.len(),
                    rows.len() - et.len(),
                    opt(quantile(&et, 0.25)),
                    opt(quantile(&et, 0.5)),
                    opt(quantile(&et, 0.75)),
                    opt(quantile(&er, 0.25)),
                    opt(quantile(&er, 0.5)),
                    opt(quantile(&er, 0.75)),
                );
            }
        }
        out
    }

    /// Median translation and rotation error of one cell, optionally for a
    /// single setting.
    pub fn cell_medians(&self, cell: &str, setting: Option<u8>) -> (Option<f64>, Option<f64>) {
        let rows = self.rows.iter().filter(|r| r.cell == cell && setting.is_none_or(|s| r.setting == s));
        let (et, er): (Vec<Option<f64>>, Vec<Option<f64>>) = rows.map(|r| (r.e_t, r.e_r)).unzip();
        let et: Vec<f64> = et.into_iter().flatten().collect();
        let er: Vec<f64> = er.into_iter().flatten().collect();
        (median(&et), median(&er))
    }
}
