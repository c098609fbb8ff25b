use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TSource};
use super::run::run;
use crate::error::{Error, Result};
use crate::loss::LossMode;

/// Cartesian grid over noise level × loss mode × T source, each cell repeated
/// over `seeds`. An empty `t_sources` keeps the template's source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub noise_levels: Vec<f64>,
    pub loss_modes: Vec<LossMode>,
    #[serde(default)]
    pub t_sources: Vec<TSource>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub noise_kind: String,
    pub level: f64,
    pub loss_mode: LossMode,
    pub t_source: TSource,
    pub seeds: usize,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "dataset,noise_kind,N,loss_mode,T_source,seeds,acc_mean,acc_std,error";

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            csv_field(&self.dataset),
            self.noise_kind.clone(),
            self.level.to_string(),
            self.loss_mode.to_string(),
            csv_field(&self.t_source.to_string()),
            self.seeds.to_string(),
            opt(self.acc_mean),
            opt(self.acc_std),
            csv_field(self.error.as_deref().unwrap_or("")),
        ]
        .join(",")
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn run_cell(template: &ExperimentConfig, level: f64, mode: LossMode, ts: &TSource, seeds: &[u64]) -> SweepRow {
    let mut row = SweepRow {
        dataset: template.dataset_name(),
        noise_kind: template.noise.kind.to_string(),
        level,
        loss_mode: mode,
        t_source: ts.clone(),
        seeds: seeds.len(),
        acc_mean: None,
        acc_std: None,
        error: None,
    };
    let mut accs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = template.clone();
        cfg.noise.level = level;
        cfg.loss = mode;
        cfg.t_source = ts.clone();
        cfg.seed = seed;
        cfg.out_dir = None;
        match run(&cfg) {
            Ok(out) => accs.push(out.report.test_accuracy),
            Err(e) => {
                row.error = Some(format!("seed {seed}: {e}"));
                return row;
            }
        }
    }
    let (m, s) = mean_std(&accs);
    row.acc_mean = Some(m);
    row.acc_std = Some(s);
    row
}

/// Runs every grid cell; a failing cell is recorded in its row and the sweep
/// continues. Cells run on up to `workers` threads; row order is grid order.
pub fn sweep(template: &ExperimentConfig, grid: &SweepGrid, workers: usize) -> Result<Vec<SweepRow>> {
    let t_sources = if grid.t_sources.is_empty() {
        vec![template.t_source.clone()]
    } else {
        grid.t_sources.clone()
    };
    if grid.noise_levels.is_empty() || grid.loss_modes.is_empty() || grid.seeds.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut cells = Vec::new();
    for &level in &grid.noise_levels {
        for &mode in &grid.loss_modes {
            for ts in &t_sources {
                cells.push((level, mode, ts.clone()));
            }
        }
    }
    let results: Vec<Mutex<Option<SweepRow>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((level, mode, ts)) = cells.get(i) else { break };
                let row = run_cell(template, *level, *mode, ts, &grid.seeds);
                *results[i].lock().expect("no poisoning") = Some(row);
            });
        }
    });
    Ok(results
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoning").expect("every cell ran"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DataSource;
    use crate::noise::NoiseSpec;

    fn template() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            data: DataSource::Synthetic {
                classes: 3,
                per_class: 100,
                dim: 2,
                separation: 6.0,
                test_per_class: 50,
            },
            noise: NoiseSpec::symmetric(0.0),
            ..ExperimentConfig::default()
        };
        cfg.network.hidden = vec![8];
        cfg.train.epochs = 2;
        cfg
    }

    #[test]
    fn mean_std_bookkeeping() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn single_cell_matches_run() {
        let grid = SweepGrid {
            noise_levels: vec![0.1],
            loss_modes: vec![LossMode::Forward],
            t_sources: vec![],
            seeds: vec![9],
        };
        let rows = sweep(&template(), &grid, 1).unwrap();
        assert_eq!(rows.len(), 1);
        let mut cfg = template();
        cfg.noise.level = 0.1;
        cfg.loss = LossMode::Forward;
        cfg.seed = 9;
        let acc = run(&cfg).unwrap().report.test_accuracy;
        assert_eq!(rows[0].acc_mean, Some(acc));
        assert_eq!(rows[0].acc_std, Some(0.0));
    }

    #[test]
    fn failing_cell_is_recorded_and_sweep_continues() {
        let mut t = template();
        t.noise = NoiseSpec::pair_flip(0.0, &[(0, 1), (1, 0)]);
        let grid = SweepGrid {
            noise_levels: vec![0.5, 0.2],
            loss_modes: vec![LossMode::Backward],
            t_sources: vec![],
            seeds: vec![1, 2],
        };
        let rows = sweep(&t, &grid, 2).unwrap();
        assert!(rows[0].error.as_deref().unwrap().contains("identity_mix"));
        assert!(rows[0].acc_mean.is_none());
        assert!(rows[1].error.is_none() && rows[1].acc_mean.is_some());
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(6), Some(""));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid = SweepGrid {
            noise_levels: vec![],
            loss_modes: vec![LossMode::Plain],
            t_sources: vec![],
            seeds: vec![1],
        };
        assert!(sweep(&template(), &grid, 1).is_err());
    }

    #[test]
    fn parallel_and_serial_agree() {
        let grid = SweepGrid {
            noise_levels: vec![0.0, 0.2],
            loss_modes: vec![LossMode::Plain, LossMode::Backward],
            t_sources: vec![],
            seeds: vec![1, 2, 3],
        };
        let a = sweep_csv(&sweep(&template(), &grid, 1).unwrap());
        let b = sweep_csv(&sweep(&template(), &grid, 3).unwrap());
        assert_eq!(a, b);
    }
}
