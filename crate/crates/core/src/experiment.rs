//! Monte Carlo sweeps and their CSV rows.
//!
//! Every trial draws from its own stream keyed on `(seed, trial)`. Within a
//! trial, the channel draw is shared by all methods, SNRs and bucket counts,
//! and each method's unit noise is shared across SNRs (common random numbers);
//! soft and hard decisions read the same scan trace.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{build_codebook, SingleBeamCodebook};
use crate::config::{ExperimentKind, ExperimentSpec, Method};
use crate::error::{Error, Result};
use crate::hashing::{mix, stream, BucketTable};
use crate::training::{
    decide, default_rounds, eimb_beams, exhaustive_train, ground_truth_beam, hmb_beams, hmb_train, rank_order, scan_responses, station_families,
    trial_log_lines, unit_noise, BsBeams, Decision, Placement, Responses, ScenarioConfig, TRIAL_LOG_HEADER,
};

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub b: Option<usize>,
    pub trials: usize,
    /// Accuracy, or a slot count for the overhead sweep.
    pub metric: f64,
    pub stderr: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "experiment,method,snr_db,b,trials,metric,stderr,seed";

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header '{}'", header.join(","))));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Binomial standard error of a success fraction.
pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Dispatches on the spec's experiment kind.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    match spec.experiment {
        ExperimentKind::Accuracy => run_accuracy_sweep(spec),
        ExperimentKind::SoftHard => run_soft_hard_sweep(spec),
        ExperimentKind::FarField => run_farfield_check(spec),
        ExperimentKind::Overhead => run_overhead_sweep(spec),
    }
}

/// Accuracy versus SNR per method and bucket count.
pub fn run_accuracy_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    run_monte_carlo(spec, spec.scenario.placement)
}

/// Soft against hard decisions on shared traces.
pub fn run_soft_hard_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    run_monte_carlo(spec, spec.scenario.placement)
}

/// Near-field against DFT codebooks with every station at `far_range`.
pub fn run_farfield_check(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let placement = Placement { range_min: spec.far_range, range_max: spec.far_range, ..spec.scenario.placement };
    run_monte_carlo(spec, placement)
}

/// Slots consumed per codebook size. Counts come from running each scan
/// schedule over a silent universe of the given size.
pub fn run_overhead_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &nc in &spec.nc_grid {
        for &method in &spec.methods {
            let grid: Vec<Option<usize>> = if method.uses_buckets() { spec.b_grid.iter().map(|&b| Some(b)).collect() } else { vec![None] };
            for b in grid {
                let slots = count_slots(method, nc, b, spec.seed)?;
                rows.push(ResultRow {
                    experiment: spec.experiment.as_str().to_string(),
                    method: format!("{}[nc={nc}]", method.as_str()),
                    snr_db: None,
                    b,
                    trials: 1,
                    metric: slots as f64,
                    stderr: 0.0,
                    seed: spec.seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Slots one station's scan uses for `method` on a universe of `nc` codewords.
pub fn count_slots(method: Method, nc: usize, b: Option<usize>, seed: u64) -> Result<usize> {
    let silent = Responses::zeros(1, nc);
    let noise = vec![Complex64::new(0.0, 0.0); 2 * nc.max(1) * default_rounds(nc)];
    let beams = match method {
        Method::ExhaustiveNearfield | Method::ExhaustiveDft => {
            let all: Vec<usize> = (0..nc).collect();
            return Ok(exhaustive_train(&silent, &all, 1.0, 0.0, &noise)?.1);
        }
        Method::Hmb | Method::HmbHard | Method::HmbDft => {
            let b = b.ok_or_else(|| Error::Precondition("bucket count required".into()))?;
            let fam = station_families(nc, b, 1, seed)?;
            let tables: Vec<BucketTable> = (0..default_rounds(nc) as u64).map(|l| fam[0].draw(l)).collect();
            BsBeams::with_zero_phases(tables)
        }
        Method::Eimb | Method::EimbHard => {
            let b = b.ok_or_else(|| Error::Precondition("bucket count required".into()))?;
            eimb_beams(nc, b)?
        }
    };
    Ok(scan_responses(&silent, &[beams], 1.0, 0.0, &noise)?.slots())
}

/// Per-trial HMB training through the explicit-weight scan, as a text log
/// with [`TRIAL_LOG_HEADER`] columns. Returns the log and `(correct, total)`.
pub fn run_training_log(spec: &ExperimentSpec) -> Result<(String, usize, usize)> {
    spec.scenario.validate()?;
    let book = build_codebook(&spec.geometry, &spec.codebook)?;
    let sc = &spec.scenario;
    let per_trial: Vec<(String, usize)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let ts = mix(spec.seed, t as u64);
            let mut rng = stream(mix(ts, SCENE_TAG));
            let mut log = String::new();
            let mut hits = 0;
            for user in 0..sc.user_count {
                let channels = sc.draw_channels(&spec.geometry, &mut rng)?;
                let truth: Vec<usize> = channels.iter().map(|c| ground_truth_beam(&book, c)).collect();
                let out = hmb_train(&book, sc, &channels, mix(ts, user as u64))?;
                hits += out.correct(&truth).iter().filter(|&&c| c).count();
                log.push_str(&trial_log_lines(t, user, &channels, &truth, &out));
            }
            Ok((log, hits))
        })
        .collect::<Result<_>>()?;
    let mut text = format!("{TRIAL_LOG_HEADER}\n");
    let mut hits = 0;
    for (log, h) in per_trial {
        text.push_str(&log);
        hits += h;
    }
    Ok((text, hits, spec.trials * sc.user_count * sc.bs_count))
}

const SCENE_TAG: u64 = 0x5343_454e;
const EXH_TAG: u64 = 0x4558_4841;
const HMB_TAG: u64 = 0x484d_4200;
const HMB_DFT_TAG: u64 = 0x484d_4244;
const EIMB_TAG: u64 = 0x4549_4d42;

/// Cell key: `(method, b, snr index)`.
type Cell = (Method, Option<usize>, usize);

struct Plan {
    cells: Vec<Cell>,
}

impl Plan {
    fn new(spec: &ExperimentSpec) -> Self {
        let mut cells = Vec::new();
        for &method in &spec.methods {
            let bs: Vec<Option<usize>> = if method.uses_buckets() { spec.b_grid.iter().map(|&b| Some(b)).collect() } else { vec![None] };
            for b in bs {
                for i in 0..spec.snr_grid_db.len() {
                    cells.push((method, b, i));
                }
            }
        }
        Self { cells }
    }

    fn index(&self, cell: Cell) -> usize {
        self.cells.iter().position(|&c| c == cell).expect("cell in plan")
    }
}

fn run_monte_carlo(spec: &ExperimentSpec, placement: Placement) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let book = build_codebook(&spec.geometry, &spec.codebook)?;
    let dft_idx = book.far_field_indices();
    let needs_buckets = spec.methods.iter().any(|m| m.uses_buckets());
    if needs_buckets {
        for &b in &spec.b_grid {
            if book.len() % b != 0 {
                return Err(Error::IndivisibleUniverse { universe: book.len(), buckets: b });
            }
            if spec.methods.contains(&Method::HmbDft) && dft_idx.len() % b != 0 {
                return Err(Error::IndivisibleUniverse { universe: dft_idx.len(), buckets: b });
            }
        }
    }
    let scenario = ScenarioConfig { placement, ..spec.scenario };
    let plan = Plan::new(spec);
    let per_trial: Vec<Vec<u64>> =
        (0..spec.trials).into_par_iter().map(|t| run_trial(spec, &scenario, &book, &dft_idx, &plan, t)).collect::<Result<_>>()?;
    let mut counts = vec![0u64; plan.cells.len()];
    for tc in &per_trial {
        for (c, x) in counts.iter_mut().zip(tc) {
            *c += x;
        }
    }
    let n = spec.trials * scenario.bs_count * scenario.user_count;
    Ok(plan
        .cells
        .iter()
        .zip(&counts)
        .map(|(&(method, b, i), &c)| {
            let p = c as f64 / n as f64;
            ResultRow {
                experiment: spec.experiment.as_str().to_string(),
                method: method.as_str().to_string(),
                snr_db: Some(spec.snr_grid_db[i]),
                b,
                trials: spec.trials,
                metric: p,
                stderr: binomial_stderr(p, n),
                seed: spec.seed,
            }
        })
        .collect())
}

fn run_trial(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
    book: &SingleBeamCodebook,
    dft_idx: &[usize],
    plan: &Plan,
    trial: usize,
) -> Result<Vec<u64>> {
    let geom = &spec.geometry;
    let ts = mix(spec.seed, trial as u64);
    let mut counts = vec![0u64; plan.cells.len()];
    let k = scenario.bs_count;
    let nc = book.len();
    let p0 = scenario.p0_watts();
    let sigma2: Vec<f64> =
        spec.snr_grid_db.iter().map(|&snr| ScenarioConfig { snr_db: snr, ..*scenario }.noise_power(geom)).collect();
    let mut scene_rng = stream(mix(ts, SCENE_TAG));
    for user in 0..scenario.user_count {
        let us = mix(ts, user as u64);
        let channels = scenario.draw_channels(geom, &mut scene_rng)?;
        let resp = Responses::new(book, &channels);
        let truth: Vec<usize> = (0..k).map(|s| resp.best(s)).collect();
        let order = rank_order(&channels, &resp, scenario.rank_by);
        let score = |counts: &mut Vec<u64>, cell: Cell, picks: &[Option<usize>], ties: &[bool]| {
            let hits = order.iter().enumerate().filter(|&(r, &st)| !ties[r] && picks[r] == Some(truth[st])).count();
            counts[plan.index(cell)] += hits as u64;
        };

        let exh: Vec<Method> = spec.methods.iter().copied().filter(|m| !m.uses_buckets()).collect();
        if !exh.is_empty() {
            let noise = unit_noise(&mut stream(mix(us, EXH_TAG)), k * nc);
            let all: Vec<usize> = (0..nc).collect();
            for m in exh {
                let cand: &[usize] = if m == Method::ExhaustiveDft { dft_idx } else { &all };
                for (i, &s2) in sigma2.iter().enumerate() {
                    let (picks, _) = exhaustive_train(&resp, cand, p0, s2, &noise)?;
                    // Exhaustive scans are per station; present them in rank order.
                    let ranked: Vec<Option<usize>> = order.iter().map(|&st| Some(picks[st])).collect();
                    score(&mut counts, (m, None, i), &ranked, &vec![false; k]);
                }
            }
        }

        for &b in &spec.b_grid {
            let has = |m: Method| spec.methods.contains(&m);
            if has(Method::Hmb) || has(Method::HmbHard) {
                let l = scenario.rounds_for(nc);
                let beams: Vec<BsBeams> = station_families(nc, b, k, mix(us, HMB_TAG ^ b as u64))?
                    .iter()
                    .map(|f| hmb_beams(book, f, l, &scenario.phase, None))
                    .collect::<Result<_>>()?;
                let noise = unit_noise(&mut stream(mix(us, HMB_TAG.wrapping_add(b as u64))), b * l);
                for (i, &s2) in sigma2.iter().enumerate() {
                    let trace = scan_responses(&resp, &beams, p0, s2, &noise)?;
                    if has(Method::Hmb) {
                        let o = decide(&trace, &beams, &order, Decision::Soft)?;
                        score(&mut counts, (Method::Hmb, Some(b), i), &o.gamma_hat, &o.ties);
                    }
                    if has(Method::HmbHard) {
                        let o = decide(&trace, &beams, &order, Decision::Hard { kappa: spec.kappa })?;
                        score(&mut counts, (Method::HmbHard, Some(b), i), &o.gamma_hat, &o.ties);
                    }
                }
            }
            if has(Method::HmbDft) {
                let sub = resp.subset(dft_idx);
                let dft_book = book.far_field_subset();
                let l = scenario.rounds_for(dft_idx.len());
                let beams: Vec<BsBeams> = station_families(dft_idx.len(), b, k, mix(us, HMB_DFT_TAG ^ b as u64))?
                    .iter()
                    .map(|f| hmb_beams(&dft_book, f, l, &scenario.phase, None))
                    .collect::<Result<_>>()?;
                let noise = unit_noise(&mut stream(mix(us, HMB_DFT_TAG.wrapping_add(b as u64))), b * l);
                for (i, &s2) in sigma2.iter().enumerate() {
                    let trace = scan_responses(&sub, &beams, p0, s2, &noise)?;
                    let o = decide(&trace, &beams, &order, Decision::Soft)?;
                    let mapped: Vec<Option<usize>> = o.gamma_hat.iter().map(|g| g.map(|x| dft_idx[x])).collect();
                    score(&mut counts, (Method::HmbDft, Some(b), i), &mapped, &o.ties);
                }
            }
            if has(Method::Eimb) || has(Method::EimbHard) {
                let beams = vec![eimb_beams(nc, b)?; k];
                let noise = unit_noise(&mut stream(mix(us, EIMB_TAG.wrapping_add(b as u64))), 2 * b);
                for (i, &s2) in sigma2.iter().enumerate() {
                    let trace = scan_responses(&resp, &beams, p0, s2, &noise)?;
                    if has(Method::Eimb) {
                        let o = decide(&trace, &beams, &order, Decision::Soft)?;
                        score(&mut counts, (Method::Eimb, Some(b), i), &o.gamma_hat, &o.ties);
                    }
                    if has(Method::EimbHard) {
                        let o = decide(&trace, &beams, &order, Decision::Hard { kappa: spec.kappa })?;
                        score(&mut counts, (Method::EimbHard, Some(b), i), &o.gamma_hat, &o.ties);
                    }
                }
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_empty_fields() {
        let rows = vec![
            ResultRow { experiment: "accuracy".into(), method: "hmb".into(), snr_db: Some(-5.0), b: Some(32), trials: 10, metric: 0.1 + 0.2, stderr: 1e-3, seed: 7 },
            ResultRow { experiment: "overhead".into(), method: "hmb[nc=512]".into(), snr_db: None, b: None, trials: 1, metric: 288.0, stderr: 0.0, seed: u64::MAX },
        ];
        let text = to_csv_string(&rows).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn overhead_counts_follow_schedules() {
        assert_eq!(count_slots(Method::Hmb, 512, Some(32), 1).unwrap(), 288);
        assert_eq!(count_slots(Method::ExhaustiveNearfield, 512, None, 1).unwrap(), 512);
        assert_eq!(count_slots(Method::Eimb, 512, Some(32), 1).unwrap(), 64);
        assert!(count_slots(Method::Hmb, 500, Some(32), 1).is_err());
    }

    #[test]
    fn stderr_is_binomial() {
        assert!((binomial_stderr(0.5, 100) - 0.05).abs() < 1e-15);
        assert_eq!(binomial_stderr(1.0, 100), 0.0);
    }
}
