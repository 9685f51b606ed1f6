//! The three stochastic run modes and their metrics.
//!
//! * [`run_plain`]: Prox-SGD with no screening.
//! * [`run_full_screening`]: every `T` steps, a full pass at the current
//!   iterate builds the finite-sum safe region and prunes screened groups.
//! * [`run_online_screening`]: the online rule is advanced with every sample
//!   and closed every `T` steps; screened groups are pruned and the anchor
//!   moves to the current iterate.
//!
//! All three share one inner loop, so with screening disabled they produce
//! bit-identical iterates for the same seed and schedule.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::dataio::{lambda_max, Dataset, SampleStream};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::regularizers::GroupRegularizer;
use crate::screening::{build_finite_screen, screen_groups, ScreenState, WeightRule};
use crate::solvers::{proxsgd_step, ActiveModel, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    ProxSgd,
    FsProxSgd,
    OsProxSgd,
    Saga,
    Pgd,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::ProxSgd => "proxsgd",
            Algo::FsProxSgd => "fs-proxsgd",
            Algo::OsProxSgd => "os-proxsgd",
            Algo::Saga => "saga",
            Algo::Pgd => "pgd",
        }
    }

    pub fn is_stochastic_run(self) -> bool {
        matches!(self, Algo::ProxSgd | Algo::FsProxSgd | Algo::OsProxSgd)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxsgd" => Ok(Algo::ProxSgd),
            "fs-proxsgd" => Ok(Algo::FsProxSgd),
            "os-proxsgd" => Ok(Algo::OsProxSgd),
            "saga" => Ok(Algo::Saga),
            "pgd" => Ok(Algo::Pgd),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    /// `λ = λ_max / lambda_ratio`.
    pub lambda_ratio: f64,
    /// One epoch is `m` inner iterations.
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to `γ_t = 1 / (m L t^0.51)`.
    pub schedule: Option<StepSchedule>,
    /// Exponent of `μ_t = 1/t^w`.
    pub w: f64,
    /// Segment length `T = t_factor · m`.
    pub t_factor: usize,
    pub screen: bool,
    /// Solution in original coordinates for the error column.
    pub reference: Option<Vec<f64>>,
    /// When false, elapsed time is reported as zero (reproducible logs).
    pub record_time: bool,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            lambda_ratio: 2.0,
            epochs: 100,
            seed: 0,
            schedule: None,
            w: 0.51,
            t_factor: 4,
            screen: true,
            reference: None,
            record_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ratio >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda ratio must be >= 1, got {}",
                self.lambda_ratio
            )));
        }
        if self.t_factor == 0 {
            return Err(Error::InvalidParameter("T factor must be >= 1".into()));
        }
        WeightRule::new(self.w)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Inner iterations divided by `m`.
    pub epoch: f64,
    pub iterations: u64,
    /// Active-set size for screening runs, nonzero count for plain runs.
    pub active: usize,
    pub nonzeros: usize,
    pub elapsed_s: f64,
    /// `‖β_t − β⋆‖₂` when a reference is configured.
    pub error: Option<f64>,
    /// Online `p − d` at the segment close.
    pub online_gap: Option<f64>,
    /// Screening residual before clamping (online or finite-sum).
    pub residual: Option<f64>,
    /// Mean inner-loop work units per iteration over the segment.
    pub work_per_iter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub algo: Algo,
    pub lambda: f64,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Plain,
    Full,
    Online,
}

pub fn run_plain(
    config: &RunConfig,
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
) -> Result<(ActiveModel, MetricsLog)> {
    run_mode(config, data, loss, reg, Mode::Plain, Algo::ProxSgd)
}

pub fn run_full_screening(
    config: &RunConfig,
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
) -> Result<(ActiveModel, MetricsLog)> {
    run_mode(config, data, loss, reg, Mode::Full, Algo::FsProxSgd)
}

pub fn run_online_screening(
    config: &RunConfig,
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
) -> Result<(ActiveModel, MetricsLog)> {
    run_mode(config, data, loss, reg, Mode::Online, Algo::OsProxSgd)
}

/// Dispatch on `config.algo` (stochastic runs only).
pub fn run(
    config: &RunConfig,
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
) -> Result<(ActiveModel, MetricsLog)> {
    match config.algo {
        Algo::ProxSgd => run_plain(config, data, loss, reg),
        Algo::FsProxSgd => run_full_screening(config, data, loss, reg),
        Algo::OsProxSgd => run_online_screening(config, data, loss, reg),
        other => Err(Error::InvalidParameter(format!(
            "{other} is a reference solver, not a stochastic run"
        ))),
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn run_mode(
    config: &RunConfig,
    data: &Dataset,
    loss: &LossModel,
    reg: &GroupRegularizer,
    mode: Mode,
    algo: Algo,
) -> Result<(ActiveModel, MetricsLog)> {
    config.validate()?;
    if reg.dim() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: reg.dim(),
        });
    }
    if let Some(r) = &config.reference {
        if r.len() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                got: r.len(),
            });
        }
    }
    let mut model = ActiveModel::zeros(reg);
    if config.epochs == 0 {
        return Ok((
            model,
            MetricsLog {
                algo,
                lambda: f64::NAN,
                records: Vec::new(),
            },
        ));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    loss.validate_labels(data.labels())?;

    let m = data.m();
    let lipschitz = loss.lipschitz();
    let lambda = lambda_max(data, loss, reg)? / config.lambda_ratio;
    let screening = config.screen && mode != Mode::Plain;
    if screening && !(lambda > 0.0) {
        return Err(Error::InvalidParameter(
            "screening needs lambda > 0 (lambda_max is zero for this data)".into(),
        ));
    }
    let schedule = config
        .schedule
        .unwrap_or_else(|| StepSchedule::default_for(m, lipschitz));
    let rule = WeightRule::new(config.w)?;
    let segment = (config.t_factor * m) as u64;
    let total = (config.epochs * m) as u64;

    let mut active_data = data.clone();
    let mut active_reg = reg.clone();
    let mut state = (mode == Mode::Online && screening).then(|| ScreenState::new(reg));
    let mut sampler = SampleStream::new(m, config.seed);
    let mut records = Vec::new();
    let mut segment_work = 0u64;
    let mut segment_steps = 0u64;
    let start = Instant::now();

    for t in 1..=total {
        let i = sampler.next_index()?;
        let row = active_data.row(i);
        let y = active_data.label(i);
        let theta = loss.d(row.dot(&model.beta), y);
        let nnz = row.nnz() as u64;
        segment_work += nnz;

        if let Some(st) = state.as_mut() {
            st.online_inner_update(row, y, theta, loss, &active_reg, lambda, &rule)?;
            // certificate and group-norm decay, anchor dot, scatter
            segment_work += (model.dim() + active_reg.n_groups()) as u64 + 3 * nnz;
        }

        proxsgd_step(
            &mut model,
            theta,
            row,
            schedule.step_size(t),
            lambda,
            &active_reg,
        )?;
        segment_work += nnz + model.dim() as u64;
        segment_steps += 1;

        if t % segment != 0 && t != total {
            continue;
        }

        let mut online_gap = None;
        let mut residual = None;
        if screening {
            let eliminate = match state.as_mut() {
                Some(st) => {
                    let close = st.online_segment_close(&active_reg, lipschitz, lambda)?;
                    online_gap = Some(close.gap);
                    residual = Some(close.residual_raw);
                    screen_groups(&close.region, &active_reg)
                }
                None => {
                    let fs =
                        build_finite_screen(&model.beta, &active_data, loss, &active_reg, lambda)?;
                    residual = Some(fs.residual);
                    screen_groups(&fs.region, &active_reg)
                }
            };
            if !eliminate.is_empty() {
                let pruning = model.prune(&active_reg, &eliminate);
                active_data = active_data.restrict_features(&pruning.position_map, model.dim());
                if let Some(st) = state.as_mut() {
                    st.restrict(&pruning);
                }
                active_reg = pruning.reg;
            }
            if let Some(st) = state.as_mut() {
                st.set_anchor(&model.beta, &active_reg);
            }
        }

        let nonzeros = model.nonzeros();
        records.push(MetricsRecord {
            epoch: t as f64 / m as f64,
            iterations: t,
            active: if mode == Mode::Plain {
                nonzeros
            } else {
                model.dim()
            },
            nonzeros,
            elapsed_s: if config.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            error: config
                .reference
                .as_ref()
                .map(|r| l2_distance(&model.to_full(), r)),
            online_gap,
            residual,
            work_per_iter: segment_work as f64 / segment_steps as f64,
        });
        segment_work = 0;
        segment_steps = 0;
    }

    Ok((
        model,
        MetricsLog {
            algo,
            lambda,
            records,
        },
    ))
}

/// `f64` with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub const CSV_HEADER: &str = "algo,epoch,active,elapsed_s,error,online_gap";

/// Write one CSV over several runs, rows sorted by `(algo, epoch)`.
pub fn write_metrics_csv<W: Write>(logs: &[MetricsLog], mut out: W) -> std::io::Result<()> {
    let mut rows: Vec<(&str, &MetricsRecord)> = logs
        .iter()
        .flat_map(|l| l.records.iter().map(move |r| (l.algo.name(), r)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.epoch.total_cmp(&b.1.epoch)));
    writeln!(out, "{CSV_HEADER}")?;
    for (algo, r) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            algo,
            format_float(r.epoch),
            r.active,
            format_float(r.elapsed_s),
            r.error.map(format_float).unwrap_or_default(),
            r.online_gap.map(format_float).unwrap_or_default(),
        )?;
    }
    Ok(())
}

/// One coefficient per line, original coordinate order.
pub fn write_coefficients<W: Write>(beta: &[f64], mut out: W) -> std::io::Result<()> {
    for b in beta {
        writeln!(out, "{}", format_float(*b))?;
    }
    Ok(())
}

pub fn parse_coefficients(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("bad coefficient {l:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::synthetic::lasso_problem;

    #[test]
    fn zero_epochs_returns_zero_model() {
        let (data, _) = lasso_problem(5, 8, 2, 0.01, 1);
        let mut cfg = RunConfig::new(Algo::ProxSgd);
        cfg.epochs = 0;
        let loss = LossModel::new(LossKind::Squared);
        let (model, log) = run_plain(&cfg, &data, &loss, &GroupRegularizer::l1(8)).unwrap();
        assert!(model.beta.iter().all(|b| *b == 0.0));
        assert!(log.records.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::new(Algo::OsProxSgd);
        cfg.lambda_ratio = 0.5;
        assert!(cfg.validate().is_err());
        cfg.lambda_ratio = 1.0;
        cfg.w = 0.4;
        assert!(cfg.validate().is_err());
        cfg.w = 0.75;
        cfg.t_factor = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn algo_names_round_trip() {
        for a in [
            Algo::ProxSgd,
            Algo::FsProxSgd,
            Algo::OsProxSgd,
            Algo::Saga,
            Algo::Pgd,
        ] {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
    }

    #[test]
    fn coefficient_file_round_trip() {
        let beta = vec![0.0, -1.25, 1.0 / 3.0, 1e-300];
        let mut buf = Vec::new();
        write_coefficients(&beta, &mut buf).unwrap();
        let back = parse_coefficients(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, beta);
        assert!(parse_coefficients("1\nx\n").is_err());
    }

    #[test]
    fn csv_is_sorted_and_blank_when_missing() {
        let rec = |epoch: f64| MetricsRecord {
            epoch,
            iterations: 0,
            active: 3,
            nonzeros: 3,
            elapsed_s: 0.0,
            error: None,
            online_gap: Some(0.5),
            residual: None,
            work_per_iter: 0.0,
        };
        let logs = vec![
            MetricsLog {
                algo: Algo::ProxSgd,
                lambda: 1.0,
                records: vec![rec(2.0), rec(1.0)],
            },
            MetricsLog {
                algo: Algo::FsProxSgd,
                lambda: 1.0,
                records: vec![rec(1.0)],
            },
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&logs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("fs-proxsgd,1.0000000000000000e0,3,"));
        assert!(lines[2].starts_with("proxsgd,1.0"));
        assert!(lines[3].starts_with("proxsgd,2.0"));
        assert!(lines[1].contains(",,5.0000000000000000e-1"));
    }
}
