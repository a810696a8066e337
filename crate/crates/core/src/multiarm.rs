//! Multi-arm beams: one joint weight vector per hash bucket, its radiation
//! pattern, the main-lobe deviation objective and the phase search over `ϑ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Mutex;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::codebook::{parse_num, SamplePoint, SingleBeamCodebook};
use crate::error::{Error, Result};
use crate::geometry::{inner, steering_vector, ArrayGeometry, DistanceModel, PolarPose};
use crate::hashing::{mix, stream, BucketTable};

/// Per-arm phases `ϑ`, wrapped into `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Self {
        Self(phases.into_iter().map(|p| p.rem_euclid(2.0 * PI)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiArmCodeword {
    /// Member codeword indices `d_b`.
    pub bucket: Vec<usize>,
    /// `F_RF f_BB = (1/√V) Σ_i e^{jϑ(i)} C(d_b^i, :)ᵀ`.
    pub weights: Vec<Complex64>,
    pub phase: PhaseVector,
    /// Achieved `δ_W`; NaN until optimized.
    pub deviation: f64,
}

impl MultiArmCodeword {
    pub fn arms(&self) -> usize {
        self.bucket.len()
    }
}

/// Joins the bucket's codewords with per-arm phases.
pub fn synthesize(book: &SingleBeamCodebook, bucket: &[usize], phase: &PhaseVector) -> Result<MultiArmCodeword> {
    if bucket.is_empty() {
        return Err(Error::Precondition("bucket must not be empty".into()));
    }
    if bucket.len() != phase.len() {
        return Err(Error::Dimension(format!("{} arms but {} phases", bucket.len(), phase.len())));
    }
    let mut sorted = bucket.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition("bucket members must be distinct".into()));
    }
    if let Some(&bad) = bucket.iter().find(|&&s| s >= book.len()) {
        return Err(Error::Precondition(format!("codeword index {bad} outside codebook of {}", book.len())));
    }
    let scale = 1.0 / (bucket.len() as f64).sqrt();
    let mut weights = vec![Complex64::new(0.0, 0.0); book.dim()];
    for (&s, &p) in bucket.iter().zip(phase.as_slice()) {
        let c = Complex64::from_polar(scale, p);
        for (w, x) in weights.iter_mut().zip(book.row(s)) {
            *w += c * x;
        }
    }
    Ok(MultiArmCodeword { bucket: bucket.to_vec(), weights, phase: phase.clone(), deviation: f64::NAN })
}

/// Normalized single-beam pattern `W′ = ⟨a(probe), a(s)⟩`, evaluated as the
/// explicit sum over elements.
pub fn pattern_single(geom: &ArrayGeometry, s: &SamplePoint, probe: &PolarPose) -> Complex64 {
    let k = geom.wavenumber();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..geom.n_count {
        let n = geom.n_index(j);
        for i in 0..geom.m_count {
            let m = geom.m_index(i);
            let ds = crate::geometry::excess_path(geom, s, m, n, DistanceModel::Exact);
            let dp = crate::geometry::excess_path(geom, probe, m, n, DistanceModel::Exact);
            acc += Complex64::from_polar(1.0, k * (ds - dp));
        }
    }
    acc / geom.element_count() as f64
}

/// Normalized multi-arm pattern `W = Σ_i (1/V) e^{jϑ(i)} W′(d_b^i)`, arm by arm.
pub fn pattern_multi(geom: &ArrayGeometry, book: &SingleBeamCodebook, cw: &MultiArmCodeword, probe: &PolarPose) -> Complex64 {
    let v = cw.arms() as f64;
    cw.bucket
        .iter()
        .zip(cw.phase.as_slice())
        .map(|(&s, &p)| Complex64::from_polar(1.0 / v, p) * pattern_single(geom, &book.points[s], probe))
        .sum()
}

/// The same pattern from the synthesized weights: `(1/√V) ⟨a(probe), weights⟩`.
pub fn pattern_from_weights(geom: &ArrayGeometry, cw: &MultiArmCodeword, probe: &PolarPose) -> Complex64 {
    let a = steering_vector(geom, probe, DistanceModel::Exact);
    inner(&a, &cw.weights) / (cw.arms() as f64).sqrt()
}

/// Main-lobe box of one single beam in `(cos θ, cos φ, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainLobe {
    pub cos_theta: (f64, f64),
    pub cos_phi: (f64, f64),
    /// Range interval; the upper end may be infinite.
    pub range: (f64, f64),
}

/// Lobe box around `s`. The range interval uses the ring spacing the codebook
/// applied at `s`: with `X = λζ²/(κA²)`,
/// `r′ ∈ [(1 + rX)/(1/r + 2X), (1 − rX)/(1/r − 2X)]`, the upper end becoming
/// infinite once `1/r ≤ 2X`. Far-field points get `r′ ∈ [1/X, ∞)`, which is
/// half a ring spacing in `1/r`.
pub fn main_lobe(geom: &ArrayGeometry, s: &SamplePoint, book: &SingleBeamCodebook) -> MainLobe {
    let sp = crate::codebook::ring_spacing(geom, s.theta_s, s.phi_s, book.zeta_delta, book.ring_rule);
    let x = geom.lambda_c * book.zeta_delta * book.zeta_delta / sp.weighted_aperture_sq;
    let range = if s.is_far_field() {
        (1.0 / x, f64::INFINITY)
    } else {
        let r = s.r_s;
        let lo = (1.0 + r * x) / (1.0 / r + 2.0 * x);
        let den = 1.0 / r - 2.0 * x;
        let hi = if den <= 0.0 { f64::INFINITY } else { (1.0 - r * x) / den };
        (lo, hi)
    };
    let (mc, nc) = (geom.m_count as f64, geom.n_count as f64);
    let ct = s.theta_s.cos();
    let cp = s.phi_s.cos();
    MainLobe {
        cos_theta: ((ct - 1.0 / nc).max(-1.0), (ct + 1.0 / nc).min(1.0)),
        cos_phi: ((cp - 1.0 / mc).max(-1.0), (cp + 1.0 / mc).min(1.0)),
        range,
    }
}

/// Quadrature resolution over a main lobe, in `cos θ × cos φ × 1/r` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LobeGrid {
    pub cos_theta: usize,
    pub cos_phi: usize,
    pub inv_r: usize,
}

impl Default for LobeGrid {
    fn default() -> Self {
        Self { cos_theta: 8, cos_phi: 8, inv_r: 4 }
    }
}

impl LobeGrid {
    pub fn points(&self) -> usize {
        self.cos_theta * self.cos_phi * self.inv_r
    }
}

fn cell_centers(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(move |i| lo + (i as f64 + 0.5) * h)
}

/// Cell-centered probe poses over the lobe; an infinite range end is cut at
/// ten Rayleigh distances.
pub fn lobe_probes(geom: &ArrayGeometry, lobe: &MainLobe, grid: &LobeGrid) -> Vec<PolarPose> {
    let far = 10.0 * geom.rayleigh_distance();
    let inv_lo = if lobe.range.1.is_finite() { 1.0 / lobe.range.1 } else { 1.0 / far };
    let inv_hi = 1.0 / lobe.range.0;
    let mut out = Vec::with_capacity(grid.points());
    for ct in cell_centers(lobe.cos_theta.0, lobe.cos_theta.1, grid.cos_theta) {
        for cp in cell_centers(lobe.cos_phi.0, lobe.cos_phi.1, grid.cos_phi) {
            for ir in cell_centers(inv_lo.min(inv_hi), inv_hi, grid.inv_r) {
                if let Ok(p) = PolarPose::new(1.0 / ir, ct.acos(), cp.acos()) {
                    out.push(p);
                }
            }
        }
    }
    out
}

const MIN_REFERENCE: f64 = 1e-6;

/// Lobe-averaged relative magnitude error `||W| − |W′|| / |W′|`, averaged over arms.
pub fn deviation(geom: &ArrayGeometry, cw: &MultiArmCodeword, book: &SingleBeamCodebook, grid: &LobeGrid) -> f64 {
    let v = cw.arms() as f64;
    let per_arm: Vec<f64> = cw
        .bucket
        .par_iter()
        .map(|&s| {
            let lobe = main_lobe(geom, &book.points[s], book);
            let mut acc = 0.0;
            let mut count = 0usize;
            for probe in lobe_probes(geom, &lobe, grid) {
                let a = steering_vector(geom, &probe, DistanceModel::Exact);
                let reference = inner(&a, book.row(s)).norm();
                if reference < MIN_REFERENCE {
                    continue;
                }
                let w = inner(&a, &cw.weights).norm() / v.sqrt();
                acc += (w - reference).abs() / reference;
                count += 1;
            }
            if count == 0 {
                0.0
            } else {
                acc / count as f64
            }
        })
        .collect();
    per_arm.iter().sum::<f64>() / v
}

/// Coordinate-descent phase search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSearch {
    /// Phase levels `Φ` per arm.
    pub levels: usize,
    /// Start points: all-zeros first, the rest random.
    pub starts: usize,
    /// Objective evaluations allowed.
    pub budget: usize,
    pub seed: u64,
    pub grid: LobeGrid,
}

impl Default for PhaseSearch {
    fn default() -> Self {
        Self { levels: 16, starts: 4, budget: 2000, seed: 0, grid: LobeGrid::default() }
    }
}

/// How bucket phases are chosen when building a multi-arm codebook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhasePolicy {
    /// `ϑ = 0`, no search; deviation left unset.
    Zero,
    Optimize(PhaseSearch),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub phase: PhaseVector,
    pub deviation: f64,
    pub evaluations: usize,
    /// Best objective after the initial evaluations and after every sweep.
    pub history: Vec<f64>,
}

/// Precomputed projections for fast repeated objective evaluation.
struct LobeSystem {
    arms: usize,
    /// Per probe: `⟨a(p), C(d_j,:)⟩` for all arms `j`.
    coupling: Vec<Complex64>,
    /// Per probe: owning arm and `|W′|`.
    owner: Vec<(usize, f64)>,
    /// Probes per arm, after excluding near-null references.
    counts: Vec<usize>,
}

impl LobeSystem {
    fn new(geom: &ArrayGeometry, book: &SingleBeamCodebook, bucket: &[usize], grid: &LobeGrid) -> Self {
        let arms = bucket.len();
        let per_arm: Vec<(Vec<Complex64>, Vec<(usize, f64)>)> = bucket
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let lobe = main_lobe(geom, &book.points[s], book);
                let mut coupling = Vec::new();
                let mut owner = Vec::new();
                for probe in lobe_probes(geom, &lobe, grid) {
                    let a = steering_vector(geom, &probe, DistanceModel::Exact);
                    let row: Vec<Complex64> = bucket.iter().map(|&d| inner(&a, book.row(d))).collect();
                    let reference = row[i].norm();
                    if reference < MIN_REFERENCE {
                        continue;
                    }
                    coupling.extend(row);
                    owner.push((i, reference));
                }
                (coupling, owner)
            })
            .collect();
        let mut coupling = Vec::new();
        let mut owner = Vec::new();
        let mut counts = vec![0; arms];
        for (c, o) in per_arm {
            for &(i, _) in &o {
                counts[i] += 1;
            }
            coupling.extend(c);
            owner.extend(o);
        }
        Self { arms, coupling, owner, counts }
    }

    fn probes(&self) -> usize {
        self.owner.len()
    }

    fn sums(&self, phase: &[f64]) -> Vec<Complex64> {
        let rot: Vec<Complex64> = phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        self.coupling.chunks_exact(self.arms).map(|row| row.iter().zip(&rot).map(|(x, r)| x * r).sum()).collect()
    }

    /// Objective from per-probe sums `Σ_j e^{jϑ_j} X_pj`, optionally with arm
    /// `j` rotated by `delta`.
    fn objective(&self, sums: &[Complex64], change: Option<(usize, Complex64)>) -> f64 {
        let v = self.arms as f64;
        let mut per_arm = vec![0.0; self.arms];
        for (p, (&(i, reference), s)) in self.owner.iter().zip(sums).enumerate() {
            let s = match change {
                Some((j, delta)) => s + delta * self.coupling[p * self.arms + j],
                None => *s,
            };
            per_arm[i] += ((s.norm() / v) - reference).abs() / reference;
        }
        per_arm.iter().zip(&self.counts).map(|(a, &c)| if c == 0 { 0.0 } else { a / c as f64 }).sum::<f64>() / v
    }
}

fn level_schedule(levels: usize) -> Vec<usize> {
    if levels >= 2 && levels.is_power_of_two() {
        let mut out = Vec::new();
        let mut l = 2;
        while l <= levels {
            out.push(l);
            l *= 2;
        }
        out
    } else {
        vec![levels.max(1)]
    }
}

/// Minimizes the main-lobe deviation over `ϑ`.
///
/// Coordinate descent on a `Φ`-level grid per arm. When `Φ` is a power of two
/// the grid is refined `2, 4, …, Φ` and each stage is run across all starts
/// before the next, so a finer `Φ` replays every evaluation of a coarser one.
pub fn optimize_phases_report(
    geom: &ArrayGeometry,
    book: &SingleBeamCodebook,
    bucket: &[usize],
    search: &PhaseSearch,
) -> Result<SearchReport> {
    if search.budget == 0 {
        return Err(Error::Precondition("phase search budget must be at least 1".into()));
    }
    let v = bucket.len();
    if v == 0 {
        return Err(Error::Precondition("bucket must not be empty".into()));
    }
    if v == 1 {
        return Ok(SearchReport { phase: PhaseVector::zeros(1), deviation: 0.0, evaluations: 0, history: vec![0.0] });
    }
    let system = LobeSystem::new(geom, book, bucket, &search.grid);
    if system.probes() == 0 {
        return Ok(SearchReport { phase: PhaseVector::zeros(v), deviation: 0.0, evaluations: 0, history: vec![0.0] });
    }

    let mut rng = stream(mix(search.seed, 0x0a11_ce55));
    let mut states: Vec<(Vec<f64>, Vec<Complex64>, f64)> = Vec::new();
    let mut evaluations = 0usize;
    for start in 0..search.starts.max(1) {
        if evaluations >= search.budget {
            break;
        }
        let phase: Vec<f64> = if start == 0 { vec![0.0; v] } else { (0..v).map(|_| rng.random::<f64>() * 2.0 * PI).collect() };
        let sums = system.sums(&phase);
        let obj = system.objective(&sums, None);
        evaluations += 1;
        states.push((phase, sums, obj));
    }
    let best_of = |states: &[(Vec<f64>, Vec<Complex64>, f64)]| {
        states.iter().enumerate().min_by(|a, b| a.1 .2.total_cmp(&b.1 .2).then(a.0.cmp(&b.0))).map(|(i, _)| i).unwrap()
    };
    let mut history = vec![states[best_of(&states)].2];

    'stages: for levels in level_schedule(search.levels) {
        for state in states.iter_mut() {
            loop {
                let mut improved = false;
                for j in 0..v {
                    let current = Complex64::from_polar(1.0, state.0[j]);
                    let mut best: Option<(f64, f64)> = None;
                    for l in 0..levels {
                        if evaluations >= search.budget {
                            break;
                        }
                        let candidate = 2.0 * PI * l as f64 / levels as f64;
                        if (candidate - state.0[j]).abs() < 1e-15 {
                            continue;
                        }
                        let delta = Complex64::from_polar(1.0, candidate) - current;
                        let obj = system.objective(&state.1, Some((j, delta)));
                        evaluations += 1;
                        if obj < best.map_or(state.2, |b| b.1) {
                            best = Some((candidate, obj));
                        }
                    }
                    if let Some((candidate, obj)) = best {
                        let delta = Complex64::from_polar(1.0, candidate) - current;
                        for (p, s) in state.1.iter_mut().enumerate() {
                            *s += delta * system.coupling[p * v + j];
                        }
                        state.0[j] = candidate;
                        state.2 = obj;
                        improved = true;
                    }
                }
                let best_now = states_min(&history, state.2);
                history.push(best_now);
                if evaluations >= search.budget {
                    break 'stages;
                }
                if !improved {
                    break;
                }
            }
        }
    }
    let i = best_of(&states);
    let (phase, _, deviation) = states.swap_remove(i);
    Ok(SearchReport { phase: PhaseVector::new(phase), deviation, evaluations, history })
}

fn states_min(history: &[f64], candidate: f64) -> f64 {
    history.last().copied().map_or(candidate, |h| h.min(candidate))
}

/// Best `ϑ` and its deviation; see [`optimize_phases_report`].
pub fn optimize_phases(
    geom: &ArrayGeometry,
    book: &SingleBeamCodebook,
    bucket: &[usize],
    search: &PhaseSearch,
) -> Result<(PhaseVector, f64)> {
    let r = optimize_phases_report(geom, book, bucket, search)?;
    Ok((r.phase, r.deviation))
}

/// Phase solutions memoized by bucket membership.
#[derive(Debug, Default)]
pub struct PhaseCache {
    inner: Mutex<HashMap<Vec<usize>, (PhaseVector, f64)>>,
}

impl PhaseCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get_or_solve(
        &self,
        geom: &ArrayGeometry,
        book: &SingleBeamCodebook,
        bucket: &[usize],
        search: &PhaseSearch,
    ) -> Result<(PhaseVector, f64)> {
        if let Some(hit) = self.inner.lock().unwrap().get(bucket) {
            return Ok(hit.clone());
        }
        let solved = optimize_phases(geom, book, bucket, search)?;
        self.inner.lock().unwrap().insert(bucket.to_vec(), solved.clone());
        Ok(solved)
    }
}

/// One multi-arm codeword per bucket of `table`, in bucket order.
pub fn build_hmb_codebook(book: &SingleBeamCodebook, table: &BucketTable, policy: &PhasePolicy) -> Result<Vec<MultiArmCodeword>> {
    build_hmb_codebook_cached(book, table, policy, None)
}

pub fn build_hmb_codebook_cached(
    book: &SingleBeamCodebook,
    table: &BucketTable,
    policy: &PhasePolicy,
    cache: Option<&PhaseCache>,
) -> Result<Vec<MultiArmCodeword>> {
    if table.universe_size() != book.len() {
        return Err(Error::Dimension(format!(
            "bucket table covers {} codewords, codebook has {}",
            table.universe_size(),
            book.len()
        )));
    }
    table
        .buckets()
        .par_iter()
        .map(|bucket| {
            let (phase, dev) = match policy {
                PhasePolicy::Zero => (PhaseVector::zeros(bucket.len()), f64::NAN),
                PhasePolicy::Optimize(search) => match cache {
                    Some(c) => c.get_or_solve(&book.geom, book, bucket, search)?,
                    None => optimize_phases(&book.geom, book, bucket, search)?,
                },
            };
            let mut cw = synthesize(book, bucket, &phase)?;
            cw.deviation = dev;
            Ok(cw)
        })
        .collect()
}

/// A multi-arm codebook with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct HmbCodebook {
    pub codebook_hash: String,
    pub round_id: u64,
    /// `Φ`, or 0 when phases were not optimized.
    pub phase_levels: usize,
    pub grid: LobeGrid,
    pub codewords: Vec<MultiArmCodeword>,
}

impl HmbCodebook {
    pub fn new(book: &SingleBeamCodebook, table: &BucketTable, policy: &PhasePolicy, codewords: Vec<MultiArmCodeword>) -> Self {
        let (phase_levels, grid) = match policy {
            PhasePolicy::Zero => (0, LobeGrid { cos_theta: 0, cos_phi: 0, inv_r: 0 }),
            PhasePolicy::Optimize(s) => (s.levels, s.grid),
        };
        Self { codebook_hash: book.fingerprint(), round_id: table.round_id, phase_levels, grid, codewords }
    }

    /// Layout:
    ///
    /// ```text
    /// hmb-multiarm 1
    /// codebook <sha256 of the single-beam codebook file>
    /// buckets <B>
    /// size <R>
    /// round <id>
    /// phase_levels <Φ>
    /// grid <cosθ cells> <cosφ cells> <1/r cells>
    /// bucket <b>                        (B blocks of five lines)
    /// members <R indices>
    /// phases <R radians>
    /// deviation <δ_W or NaN>
    /// weights <re im, M·N pairs>
    /// end
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = self.codewords.first().map_or(0, |c| c.arms());
        let _ = writeln!(s, "hmb-multiarm 1");
        let _ = writeln!(s, "codebook {}", self.codebook_hash);
        let _ = writeln!(s, "buckets {}", self.codewords.len());
        let _ = writeln!(s, "size {r}");
        let _ = writeln!(s, "round {}", self.round_id);
        let _ = writeln!(s, "phase_levels {}", self.phase_levels);
        let _ = writeln!(s, "grid {} {} {}", self.grid.cos_theta, self.grid.cos_phi, self.grid.inv_r);
        for (b, cw) in self.codewords.iter().enumerate() {
            let _ = writeln!(s, "bucket {b}");
            let _ = writeln!(s, "members {}", join(cw.bucket.iter()));
            let _ = writeln!(s, "phases {}", join(cw.phase.as_slice().iter()));
            let _ = writeln!(s, "deviation {}", cw.deviation);
            let _ = writeln!(s, "weights {}", join(cw.weights.iter().flat_map(|z| [z.re, z.im])));
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Format("truncated multi-arm codebook".into()))?;
            let mut f = line.split_whitespace();
            match f.next() {
                Some(k) if k == key => Ok(f.map(str::to_string).collect()),
                _ => Err(Error::Format(format!("expected '{key}', got '{line}'"))),
            }
        };
        if next("hmb-multiarm")? != ["1"] {
            return Err(Error::Format("unsupported multi-arm codebook version".into()));
        }
        let codebook_hash = next("codebook")?.join("");
        let b: usize = parse_num(&next("buckets")?.join(""))?;
        let r: usize = parse_num(&next("size")?.join(""))?;
        let round_id: u64 = parse_num(&next("round")?.join(""))?;
        let phase_levels: usize = parse_num(&next("phase_levels")?.join(""))?;
        let g: Vec<usize> = next("grid")?.iter().map(|x| parse_num(x)).collect::<Result<_>>()?;
        if g.len() != 3 {
            return Err(Error::Format("grid needs three cell counts".into()));
        }
        let mut codewords = Vec::with_capacity(b);
        for _ in 0..b {
            next("bucket")?;
            let bucket: Vec<usize> = next("members")?.iter().map(|x| parse_num(x)).collect::<Result<_>>()?;
            let phases: Vec<f64> = next("phases")?.iter().map(|x| parse_num(x)).collect::<Result<_>>()?;
            let deviation: f64 = parse_num(&next("deviation")?.join(""))?;
            let raw: Vec<f64> = next("weights")?.iter().map(|x| parse_num(x)).collect::<Result<_>>()?;
            if bucket.len() != r || phases.len() != r || !raw.len().is_multiple_of(2) {
                return Err(Error::Format("inconsistent bucket block".into()));
            }
            let weights = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
            codewords.push(MultiArmCodeword { bucket, weights, phase: PhaseVector(phases), deviation });
        }
        next("end")?;
        Ok(Self {
            codebook_hash,
            round_id,
            phase_levels,
            grid: LobeGrid { cos_theta: g[0], cos_phi: g[1], inv_r: g[2] },
            codewords,
        })
    }
}

fn join<T: std::fmt::Display>(it: impl Iterator<Item = T>) -> String {
    let v: Vec<String> = it.map(|x| x.to_string()).collect();
    v.join(" ")
}
