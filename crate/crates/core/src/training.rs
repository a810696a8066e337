//! Scan, demultiplex and vote: multi-BS beam training over hashed multi-arm beams,
//! plus the exhaustive and equal-interval baselines.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codebook::SingleBeamCodebook;
use crate::error::{Error, Result};
use crate::geometry::{db_to_linear, dbm_to_watts, inner, los_channel, ArrayGeometry, ChannelRealization, PolarPose};
use crate::hashing::{mix, stream, BucketTable, HashFamily};
use crate::multiarm::{build_hmb_codebook_cached, synthesize, PhaseCache, PhasePolicy, PhaseVector};

const HASH_TAG: u64 = 0x4841_5348;
const NOISE_TAG: u64 = 0x4e4f_4953;

/// `⌈log₂ N_C⌉`, at least 1.
pub fn default_rounds(universe_size: usize) -> usize {
    if universe_size <= 2 {
        return 1;
    }
    (usize::BITS - (universe_size - 1).leading_zeros()) as usize
}

/// How soft-decision ranks are matched to base stations when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankBy {
    /// Received power through the best codeword, `max_s |h_kᴴ C(s,:)ᵀ|²`.
    BeamGain,
    /// Path gain `β_k`, i.e. range order.
    PathGain,
}

impl RankBy {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankBy::BeamGain => "beam_gain",
            RankBy::PathGain => "path_gain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "beam_gain" => Ok(RankBy::BeamGain),
            "path_gain" => Ok(RankBy::PathGain),
            _ => Err(Error::Config(format!("unknown rank rule '{s}'"))),
        }
    }
}

/// Slot-to-rank demultiplexing rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Soft,
    /// Threshold `mean + κ·std`, hits split into `K` power quantiles.
    Hard { kappa: f64 },
}

/// Base-station placement around the user at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub range_min: f64,
    pub range_max: f64,
    /// Minimum Euclidean distance between any two stations.
    pub min_separation: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self { range_min: 10.0, range_max: 81.92, min_separation: 5.0 }
    }
}

impl Placement {
    /// All stations at one range, angles still random.
    pub fn fixed_range(r: f64) -> Self {
        Self { range_min: r, range_max: r, min_separation: 5.0 }
    }
}

/// Uniform angles, log-uniform ranges, rejection on separation.
pub fn place_base_stations<R: Rng>(placement: &Placement, count: usize, rng: &mut R) -> Result<Vec<PolarPose>> {
    let (lo, hi) = (placement.range_min, placement.range_max);
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Precondition(format!("invalid range interval [{lo}, {hi}]")));
    }
    let mut poses: Vec<PolarPose> = Vec::with_capacity(count);
    let mut attempts = 0u32;
    while poses.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Precondition(format!("cannot place {count} stations {} m apart", placement.min_separation)));
        }
        let r = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        let theta = rng.random::<f64>() * std::f64::consts::PI;
        let phi = std::f64::consts::PI * (1.0 - rng.random::<f64>());
        let Ok(pose) = PolarPose::new(r, theta, phi) else { continue };
        let p = pose.position();
        let clear = poses.iter().all(|q| {
            let q = q.position();
            let d2: f64 = (0..3).map(|i| (p[i] - q[i]).powi(2)).sum();
            d2 >= placement.min_separation * placement.min_separation
        });
        if clear {
            poses.push(pose);
        }
    }
    Ok(poses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    /// Base stations `K`.
    pub bs_count: usize,
    /// Hash rounds `L`; 0 selects `⌈log₂ N_C⌉`.
    pub rounds: usize,
    /// Buckets `B`.
    pub buckets: usize,
    /// Reference SNR `γ` in dB.
    pub snr_db: f64,
    pub p0_dbm: f64,
    pub rho0_db: f64,
    /// Reference distance `r₀` in `γ = P₀MNρ₀/(r₀²σ²)`.
    pub r0: f64,
    pub user_count: usize,
    pub placement: Placement,
    pub rank_by: RankBy,
    pub phase: PhasePolicy,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bs_count: 5,
            rounds: 0,
            buckets: 32,
            snr_db: 10.0,
            p0_dbm: 15.0,
            rho0_db: -72.0,
            r0: 81.92,
            user_count: 1,
            placement: Placement::default(),
            rank_by: RankBy::BeamGain,
            phase: PhasePolicy::Zero,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bs_count == 0 || self.buckets == 0 || self.user_count == 0 {
            return Err(Error::Precondition("bs_count, buckets and user_count must be at least 1".into()));
        }
        if !(self.r0 > 0.0) || !self.snr_db.is_finite() || !self.p0_dbm.is_finite() || !self.rho0_db.is_finite() {
            return Err(Error::Precondition("power parameters must be finite and r0 positive".into()));
        }
        Ok(())
    }

    pub fn rounds_for(&self, universe_size: usize) -> usize {
        if self.rounds == 0 {
            default_rounds(universe_size)
        } else {
            self.rounds
        }
    }

    pub fn p0_watts(&self) -> f64 {
        dbm_to_watts(self.p0_dbm)
    }

    pub fn rho0(&self) -> f64 {
        db_to_linear(self.rho0_db)
    }

    /// `σ² = P₀MNρ₀ / (r₀² γ)` in watts.
    pub fn noise_power(&self, geom: &ArrayGeometry) -> f64 {
        self.p0_watts() * geom.element_count() as f64 * self.rho0() / (self.r0 * self.r0 * db_to_linear(self.snr_db))
    }

    pub fn sigma2_dbm(&self, geom: &ArrayGeometry) -> f64 {
        10.0 * (self.noise_power(geom) * 1e3).log10()
    }

    /// Reference SNR that yields noise power `sigma2_dbm`.
    pub fn snr_for_sigma2(&self, geom: &ArrayGeometry, sigma2_dbm: f64) -> f64 {
        let signal = self.p0_watts() * geom.element_count() as f64 * self.rho0() / (self.r0 * self.r0);
        10.0 * (signal / dbm_to_watts(sigma2_dbm)).log10()
    }

    /// Station channels for one user.
    pub fn draw_channels<R: Rng>(&self, geom: &ArrayGeometry, rng: &mut R) -> Result<Vec<ChannelRealization>> {
        place_base_stations(&self.placement, self.bs_count, rng)?
            .iter()
            .map(|p| los_channel(geom, p, self.rho0()))
            .collect()
    }
}

/// `h_kᴴ C(s,:)ᵀ` for every station `k` and codeword `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responses {
    universe_size: usize,
    amps: Vec<Complex64>,
}

impl Responses {
    pub fn new(book: &SingleBeamCodebook, channels: &[ChannelRealization]) -> Self {
        let mut amps = Vec::with_capacity(channels.len() * book.len());
        for ch in channels {
            amps.extend(book.rows().map(|row| inner(&ch.gains, row)));
        }
        Self { universe_size: book.len(), amps }
    }

    /// Silent channels over a universe of `universe_size` codewords.
    pub fn zeros(stations: usize, universe_size: usize) -> Self {
        Self { universe_size, amps: vec![Complex64::new(0.0, 0.0); stations * universe_size] }
    }

    /// Responses restricted to `indices`, renumbered `0..indices.len()`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let amps = (0..self.stations()).flat_map(|k| indices.iter().map(move |&s| (k, s))).map(|(k, s)| self.amp(k, s)).collect();
        Self { universe_size: indices.len(), amps }
    }

    pub fn stations(&self) -> usize {
        self.amps.len() / self.universe_size.max(1)
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn amp(&self, k: usize, s: usize) -> Complex64 {
        self.amps[k * self.universe_size + s]
    }

    pub fn station(&self, k: usize) -> &[Complex64] {
        &self.amps[k * self.universe_size..(k + 1) * self.universe_size]
    }

    /// Noiseless best codeword of station `k`; lowest index on ties.
    pub fn best(&self, k: usize) -> usize {
        argmax(self.station(k).iter().map(|a| a.norm_sqr()))
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `argmax_s |⟨C(s,:), h⟩|`, lowest index on ties.
pub fn ground_truth_beam(book: &SingleBeamCodebook, channel: &ChannelRealization) -> usize {
    argmax(book.rows().map(|row| inner(row, &channel.gains).norm_sqr()))
}

/// Station indices from strongest to weakest; lowest index on ties.
pub fn rank_order(channels: &[ChannelRealization], responses: &Responses, rule: RankBy) -> Vec<usize> {
    let key = |k: usize| match rule {
        RankBy::PathGain => channels[k].beta,
        RankBy::BeamGain => responses.amp(k, responses.best(k)).norm_sqr(),
    };
    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order
}

/// One station's per-round bucket tables and bucket phases.
#[derive(Debug, Clone, PartialEq)]
pub struct BsBeams {
    pub tables: Vec<BucketTable>,
    /// `phases[l][b]`.
    pub phases: Vec<Vec<PhaseVector>>,
}

impl BsBeams {
    pub fn with_zero_phases(tables: Vec<BucketTable>) -> Self {
        let phases = tables.iter().map(|t| t.buckets().iter().map(|b| PhaseVector::zeros(b.len())).collect()).collect();
        Self { tables, phases }
    }

    pub fn rounds(&self) -> usize {
        self.tables.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.tables.first().map_or(0, |t| t.bucket_count())
    }

    /// Slot order `q = l·B + b`.
    pub fn schedule(&self) -> Vec<(usize, usize)> {
        (0..self.rounds()).flat_map(|l| (0..self.bucket_count()).map(move |b| (l, b))).collect()
    }
}

/// `L` fresh hash tables for station `k`; phases per `policy`.
pub fn hmb_beams(
    book: &SingleBeamCodebook,
    family: &HashFamily,
    rounds: usize,
    policy: &PhasePolicy,
    cache: Option<&PhaseCache>,
) -> Result<BsBeams> {
    let tables: Vec<BucketTable> = (0..rounds as u64).map(|l| family.draw(l)).collect();
    let beams = BsBeams::with_zero_phases(tables);
    apply_policy(book, beams, policy, cache)
}

/// Fixed two-round layout: residue classes, then contiguous blocks.
pub fn eimb_beams(universe_size: usize, bucket_count: usize) -> Result<BsBeams> {
    let tables = vec![
        BucketTable::residues(universe_size, bucket_count, 0)?,
        BucketTable::blocks(universe_size, bucket_count, 1)?,
    ];
    Ok(BsBeams::with_zero_phases(tables))
}

/// Replaces zero phases by optimized ones when the policy asks for it.
pub fn apply_policy(book: &SingleBeamCodebook, mut beams: BsBeams, policy: &PhasePolicy, cache: Option<&PhaseCache>) -> Result<BsBeams> {
    if matches!(policy, PhasePolicy::Optimize(_)) {
        for (l, table) in beams.tables.iter().enumerate() {
            let cws = build_hmb_codebook_cached(book, table, policy, cache)?;
            beams.phases[l] = cws.into_iter().map(|c| c.phase).collect();
        }
    }
    Ok(beams)
}

/// Received slot powers `P(l,b)`, slot `q = l·B + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub powers: Vec<f64>,
    pub buckets: usize,
    pub rounds: usize,
}

impl PowerTrace {
    pub fn new(powers: Vec<f64>, buckets: usize) -> Result<Self> {
        if buckets == 0 || !powers.len().is_multiple_of(buckets) {
            return Err(Error::Dimension(format!("{} slots do not split into rounds of {buckets}", powers.len())));
        }
        let rounds = powers.len() / buckets;
        Ok(Self { powers, buckets, rounds })
    }

    pub fn slots(&self) -> usize {
        self.powers.len()
    }

    /// `(round, bucket)` of slot `q`.
    pub fn slot_map(&self, q: usize) -> (usize, usize) {
        (q / self.buckets, q % self.buckets)
    }
}

/// `n` draws of `CN(0, 1)`.
pub fn unit_noise<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

fn check_layout(beams: &[BsBeams], stations: usize, universe_size: usize) -> Result<(usize, usize)> {
    if beams.len() != stations || beams.is_empty() {
        return Err(Error::Dimension(format!("{} beam sets for {stations} stations", beams.len())));
    }
    let (l, b) = (beams[0].rounds(), beams[0].bucket_count());
    for bb in beams {
        if bb.rounds() != l || bb.bucket_count() != b {
            return Err(Error::Dimension("stations must share rounds and bucket count".into()));
        }
        if bb.tables.iter().any(|t| t.universe_size() != universe_size) {
            return Err(Error::Dimension("bucket tables do not cover the codebook".into()));
        }
    }
    Ok((l, b))
}

/// Superimposed multi-station scan with explicit beam weights:
/// `P(l,b) = |Σ_k √P₀ h_kᴴ w_k(l,b) + n|²`, `n ~ CN(0, σ²)`.
pub fn scan<R: Rng>(
    book: &SingleBeamCodebook,
    beams: &[BsBeams],
    channels: &[ChannelRealization],
    p0_watts: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<PowerTrace> {
    let (l, b) = check_layout(beams, channels.len(), book.len())?;
    if channels.iter().any(|c| c.gains.len() != book.dim()) {
        return Err(Error::Dimension("channel length differs from codeword length".into()));
    }
    let noise = unit_noise(rng, l * b);
    let amp = p0_watts.sqrt();
    let sigma = sigma2.sqrt();
    let mut powers = Vec::with_capacity(l * b);
    for (q, (round, bucket)) in beams[0].schedule().into_iter().enumerate() {
        let mut y = noise[q] * sigma;
        for (bb, ch) in beams.iter().zip(channels) {
            let cw = synthesize(book, bb.tables[round].bucket(bucket), &bb.phases[round][bucket])?;
            y += inner(&ch.gains, &cw.weights) * amp;
        }
        powers.push(y.norm_sqr());
    }
    PowerTrace::new(powers, b)
}

/// The same scan through precomputed responses: by linearity
/// `h_kᴴ w = (1/√V) Σ_i e^{jϑ_i} h_kᴴ C(d_i,:)ᵀ`. `noise` holds unit draws.
pub fn scan_responses(
    responses: &Responses,
    beams: &[BsBeams],
    p0_watts: f64,
    sigma2: f64,
    noise: &[Complex64],
) -> Result<PowerTrace> {
    let (l, b) = check_layout(beams, responses.stations(), responses.universe_size())?;
    if noise.len() < l * b {
        return Err(Error::Dimension(format!("{} noise draws for {} slots", noise.len(), l * b)));
    }
    let amp = p0_watts.sqrt();
    let sigma = sigma2.sqrt();
    let mut powers = Vec::with_capacity(l * b);
    for (q, (round, bucket)) in beams[0].schedule().into_iter().enumerate() {
        let mut y = noise[q] * sigma;
        for (k, bb) in beams.iter().enumerate() {
            let members = bb.tables[round].bucket(bucket);
            let phase = bb.phases[round][bucket].as_slice();
            let scale = amp / (members.len() as f64).sqrt();
            let zero_phase = phase.iter().all(|&p| p == 0.0);
            let s: Complex64 = if zero_phase {
                members.iter().map(|&d| responses.amp(k, d)).sum()
            } else {
                members.iter().zip(phase).map(|(&d, &p)| Complex64::from_polar(1.0, p) * responses.amp(k, d)).sum()
            };
            y += s * scale;
        }
        powers.push(y.norm_sqr());
    }
    PowerTrace::new(powers, b)
}

fn descending(powers: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..powers.len()).collect();
    idx.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]).then(a.cmp(&b)));
    idx
}

/// Rank `k` receives the slots of the `(kL+1)`-th to `((k+1)L)`-th largest powers.
pub fn soft_demultiplex(trace: &PowerTrace, stations: usize, rounds: usize) -> Result<Vec<Vec<usize>>> {
    if stations * rounds > trace.slots() {
        return Err(Error::Precondition(format!("{} slots cannot host {stations}×{rounds}", trace.slots())));
    }
    let order = descending(&trace.powers);
    Ok((0..stations).map(|k| order[k * rounds..(k + 1) * rounds].to_vec()).collect())
}

/// Slots above `mean + κ·std`, strongest first, split into `stations` near-equal
/// power quantiles. Ranks may come back empty.
pub fn hard_demultiplex(trace: &PowerTrace, stations: usize, kappa: f64) -> Vec<Vec<usize>> {
    let n = trace.slots() as f64;
    let mean = trace.powers.iter().sum::<f64>() / n;
    let var = trace.powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let tau = mean + kappa * var.sqrt();
    let hits: Vec<usize> = descending(&trace.powers).into_iter().filter(|&q| trace.powers[q] > tau).collect();
    let h = hits.len();
    (0..stations).map(|k| hits[k * h / stations..(k + 1) * h / stations].to_vec()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vote {
    /// Winner; `None` when no slot was assigned.
    pub index: Option<usize>,
    pub votes: u32,
    /// Several indices shared the top tally.
    pub tie: bool,
}

/// Every assigned slot votes for all members of its bucket in that round.
pub fn vote(tables: &[BucketTable], slots: &[usize]) -> Result<Vote> {
    let Some(first) = tables.first() else {
        return Err(Error::Precondition("voting needs at least one table".into()));
    };
    let b = first.bucket_count();
    let mut tally = vec![0u32; first.universe_size()];
    for &q in slots {
        let (l, bucket) = (q / b, q % b);
        let t = tables.get(l).ok_or_else(|| Error::Dimension(format!("slot {q} beyond {} rounds", tables.len())))?;
        for &x in t.bucket(bucket) {
            tally[x] += 1;
        }
    }
    if slots.is_empty() {
        return Ok(Vote { index: None, votes: 0, tie: false });
    }
    let top = *tally.iter().max().unwrap();
    let index = tally.iter().position(|&v| v == top);
    let tie = tally.iter().filter(|&&v| v == top).count() > 1;
    Ok(Vote { index, votes: top, tie })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// Station index behind each rank, strongest first (evaluator side).
    pub rank_order: Vec<usize>,
    /// Estimated codeword per rank.
    pub gamma_hat: Vec<Option<usize>>,
    pub slot_assignment: Vec<Vec<usize>>,
    pub votes: Vec<u32>,
    pub ties: Vec<bool>,
    /// Scan slots consumed.
    pub slots: usize,
}

impl TrainingOutcome {
    /// Per rank: estimate equals `truth[station]` with no tie.
    pub fn correct(&self, truth: &[usize]) -> Vec<bool> {
        self.rank_order
            .iter()
            .enumerate()
            .map(|(k, &st)| !self.ties[k] && self.gamma_hat[k] == Some(truth[st]))
            .collect()
    }

    /// Station-indexed estimates.
    pub fn by_station(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.rank_order.len()];
        for (k, &st) in self.rank_order.iter().enumerate() {
            out[st] = self.gamma_hat[k];
        }
        out
    }
}

/// Demultiplexes a trace and votes each rank against its station's tables.
pub fn decide(trace: &PowerTrace, beams: &[BsBeams], order: &[usize], decision: Decision) -> Result<TrainingOutcome> {
    let k = order.len();
    let rounds = beams.first().map_or(0, |b| b.rounds());
    let sets = match decision {
        Decision::Soft => soft_demultiplex(trace, k, rounds)?,
        Decision::Hard { kappa } => hard_demultiplex(trace, k, kappa),
    };
    let mut gamma_hat = Vec::with_capacity(k);
    let mut votes = Vec::with_capacity(k);
    let mut ties = Vec::with_capacity(k);
    for (rank, slots) in sets.iter().enumerate() {
        let v = vote(&beams[order[rank]].tables, slots)?;
        gamma_hat.push(v.index);
        votes.push(v.votes);
        ties.push(v.tie);
    }
    Ok(TrainingOutcome { rank_order: order.to_vec(), gamma_hat, slot_assignment: sets, votes, ties, slots: trace.slots() })
}

/// Per-station hash families derived from one seed.
pub fn station_families(universe_size: usize, buckets: usize, stations: usize, seed: u64) -> Result<Vec<HashFamily>> {
    let base = HashFamily::new(universe_size, buckets, mix(seed, HASH_TAG))?;
    Ok((0..stations).map(|k| base.for_station(k)).collect())
}

/// Full hashed multi-arm training for one user: hash draws, beam build, scan
/// with explicit weights, soft decision and voting.
pub fn hmb_train(book: &SingleBeamCodebook, cfg: &ScenarioConfig, channels: &[ChannelRealization], seed: u64) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if channels.len() != cfg.bs_count {
        return Err(Error::Dimension(format!("{} channels for {} stations", channels.len(), cfg.bs_count)));
    }
    let rounds = cfg.rounds_for(book.len());
    let beams: Vec<BsBeams> = station_families(book.len(), cfg.buckets, cfg.bs_count, seed)?
        .iter()
        .map(|f| hmb_beams(book, f, rounds, &cfg.phase, None))
        .collect::<Result<_>>()?;
    let mut rng = stream(mix(seed, NOISE_TAG));
    let trace = scan(book, &beams, channels, cfg.p0_watts(), cfg.noise_power(&book.geom), &mut rng)?;
    let responses = Responses::new(book, channels);
    let order = rank_order(channels, &responses, cfg.rank_by);
    decide(&trace, &beams, &order, Decision::Soft)
}

/// Equal-interval multi-arm training: the fixed two-round layout through the
/// same scan, decision and vote.
pub fn eimb_train(
    book: &SingleBeamCodebook,
    cfg: &ScenarioConfig,
    channels: &[ChannelRealization],
    decision: Decision,
    seed: u64,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let beams = vec![eimb_beams(book.len(), cfg.buckets)?; channels.len()];
    let mut rng = stream(mix(seed, NOISE_TAG));
    let trace = scan(book, &beams, channels, cfg.p0_watts(), cfg.noise_power(&book.geom), &mut rng)?;
    let responses = Responses::new(book, channels);
    let order = rank_order(channels, &responses, cfg.rank_by);
    decide(&trace, &beams, &order, decision)
}

/// Alternate single-beam scan: station by station over `candidates`, argmax of
/// noisy power. `unit_noise[k·N_C + s]` is the draw for station `k`, codeword `s`,
/// so sub-codebooks scored on the same draws share noise.
pub fn exhaustive_train(
    responses: &Responses,
    candidates: &[usize],
    p0_watts: f64,
    sigma2: f64,
    unit_noise: &[Complex64],
) -> Result<(Vec<usize>, usize)> {
    let nc = responses.universe_size();
    if unit_noise.len() < responses.stations() * nc {
        return Err(Error::Dimension("not enough noise draws for the exhaustive scan".into()));
    }
    if candidates.is_empty() || candidates.iter().any(|&s| s >= nc) {
        return Err(Error::Precondition("candidate set empty or outside the codebook".into()));
    }
    let amp = p0_watts.sqrt();
    let sigma = sigma2.sqrt();
    let picks = (0..responses.stations())
        .map(|k| {
            let powers = candidates.iter().map(|&s| (responses.amp(k, s) * amp + unit_noise[k * nc + s] * sigma).norm_sqr());
            candidates[argmax(powers)]
        })
        .collect();
    Ok((picks, responses.stations() * candidates.len()))
}

/// `log₂(1 + γ |⟨beam, g⟩|²)` with `g` the channel's unit steering component.
pub fn achievable_rate(snr_linear: f64, channel: &ChannelRealization, beam: &[Complex64]) -> f64 {
    let g = channel.unit_response();
    (1.0 + snr_linear * inner(beam, &g).norm_sqr()).log2()
}

/// Column header of the per-trial log.
pub const TRIAL_LOG_HEADER: &str = "trial user rank station range_m theta_rad phi_rad truth estimate votes tie slots";

/// One log line per rank; slots comma-separated, `-` for an empty estimate.
pub fn trial_log_lines(
    trial: usize,
    user: usize,
    channels: &[ChannelRealization],
    truth: &[usize],
    outcome: &TrainingOutcome,
) -> String {
    let mut s = String::new();
    for (rank, &st) in outcome.rank_order.iter().enumerate() {
        let p = channels[st].bs_pose;
        let est = outcome.gamma_hat[rank].map_or("-".to_string(), |x| x.to_string());
        let slots: Vec<String> = outcome.slot_assignment[rank].iter().map(|q| q.to_string()).collect();
        let _ = writeln!(
            s,
            "{trial} {user} {rank} {st} {} {} {} {} {est} {} {} {}",
            p.r,
            p.theta,
            p.phi,
            truth[st],
            outcome.votes[rank],
            u8::from(outcome.ties[rank]),
            if slots.is_empty() { "-".to_string() } else { slots.join(",") },
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_codebook, CodebookConfig, RingRule, SamplePoint};
    use crate::geometry::{steering_vector, DistanceModel};

    fn small_book() -> SingleBeamCodebook {
        let g = ArrayGeometry::new(2, 16, 0.005, 0.005, 0.01, 28e9).unwrap();
        let full = build_codebook(&g, &CodebookConfig { delta: 0.5, r_min: 0.05, ring_rule: RingRule::Union }).unwrap();
        let pts: Vec<SamplePoint> = full.points[..full.len() - full.len() % 8].to_vec();
        SingleBeamCodebook::from_points(g, pts, full.delta, full.zeta_delta, full.r_min, full.ring_rule)
    }

    fn trace(p: &[f64], b: usize) -> PowerTrace {
        PowerTrace::new(p.to_vec(), b).unwrap()
    }

    #[test]
    fn rounds_are_ceil_log2() {
        assert_eq!(default_rounds(512), 9);
        assert_eq!(default_rounds(513), 10);
        assert_eq!(default_rounds(704), 10);
        assert_eq!(default_rounds(16), 4);
        assert_eq!(default_rounds(2), 1);
    }

    #[test]
    fn soft_demultiplex_toy_trace() {
        let t = trace(&[9.0, 1.0, 8.0, 2.0, 7.0, 3.0], 3);
        let sets = soft_demultiplex(&t, 3, 2).unwrap();
        assert_eq!(sets, vec![vec![0, 2], vec![4, 5], vec![3, 1]]);
        let flat = trace(&[1.0; 6], 3);
        assert_eq!(soft_demultiplex(&flat, 2, 3).unwrap(), vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(soft_demultiplex(&t, 1, 2).unwrap(), vec![vec![0, 2]]);
        assert!(soft_demultiplex(&t, 4, 2).is_err());
    }

    #[test]
    fn hard_demultiplex_finds_strong_slots() {
        let mut p = vec![1.0; 40];
        for &q in &[3, 17, 25, 38] {
            p[q] = 100.0 + q as f64;
        }
        let sets = hard_demultiplex(&trace(&p, 8), 2, 1.0);
        assert_eq!(sets, vec![vec![38, 25], vec![17, 3]]);
        let flat = hard_demultiplex(&trace(&[2.0; 16], 4), 2, 1.0);
        assert!(flat.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn hard_hits_shrink_with_kappa() {
        let mut rng = stream(11);
        let p: Vec<f64> = unit_noise(&mut rng, 256).iter().map(|z| z.norm_sqr()).collect();
        let t = trace(&p, 16);
        let mut last = usize::MAX;
        for kappa in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let n: usize = hard_demultiplex(&t, 1, kappa).iter().map(Vec::len).sum();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn vote_with_single_round_ties() {
        let t = BucketTable::blocks(16, 4, 0).unwrap();
        let v = vote(&[t], &[2]).unwrap();
        assert_eq!(v, Vote { index: Some(8), votes: 1, tie: true });
    }

    #[test]
    fn vote_on_two_round_toy() {
        // First hash: 1-based {1,6,9,13},{2,8,12,16},{3,5,10,15},{4,7,11,14}.
        let first: [[usize; 4]; 4] = [[1, 6, 9, 13], [2, 8, 12, 16], [3, 5, 10, 15], [4, 7, 11, 14]];
        let second: [[usize; 4]; 4] = [[9, 2, 3, 4], [1, 5, 7, 8], [6, 10, 11, 12], [13, 14, 15, 16]];
        let table = |rows: &[[usize; 4]; 4], id| {
            let mut perm = vec![0; 16];
            for (b, row) in rows.iter().enumerate() {
                for (slot, &x) in row.iter().enumerate() {
                    perm[x - 1] = b * 4 + slot;
                }
            }
            BucketTable::from_permutation(&perm, 4, id).unwrap()
        };
        let tables = [table(&first, 0), table(&second, 1)];
        let v = vote(&tables, &[0, 4]).unwrap();
        assert_eq!(v, Vote { index: Some(8), votes: 2, tie: false });
        // Disjoint picks: all eight members tie at one vote.
        let blocks = [BucketTable::blocks(16, 4, 0).unwrap(), BucketTable::blocks(16, 4, 1).unwrap()];
        let v = vote(&blocks, &[0, 5]).unwrap();
        assert_eq!(v, Vote { index: Some(0), votes: 1, tie: true });
        assert_eq!(vote(&tables, &[]).unwrap().index, None);
    }

    #[test]
    fn ground_truth_at_sample_point() {
        let book = small_book();
        for s in [0, 7, book.len() - 1] {
            let p = book.points[s];
            let r = if p.is_far_field() { 1e7 } else { p.r_s };
            let ch = los_channel(&book.geom, &PolarPose::new(r, p.theta_s, p.phi_s).unwrap(), 1e-7).unwrap();
            assert_eq!(ground_truth_beam(&book, &ch), s);
            let mut scaled = ch.clone();
            scaled.gains.iter_mut().for_each(|z| *z *= 37.0);
            assert_eq!(ground_truth_beam(&book, &scaled), s);
        }
    }

    #[test]
    fn rate_examples() {
        let g = ArrayGeometry::standard_upa();
        let ch = los_channel(&g, &PolarPose::new(20.0, 1.1, 1.3).unwrap(), 1e-7).unwrap();
        let beam = ch.unit_response();
        assert!((achievable_rate(10.0, &ch, &beam) - 11f64.log2()).abs() < 1e-12);
        let other = steering_vector(&g, &PolarPose::new(1e9, 0.3, 1.3).unwrap(), DistanceModel::Exact);
        assert!(achievable_rate(10.0, &ch, &other) < 0.01);
        // Projection 0.9 at 10 dB.
        let mixed: Vec<Complex64> = beam.iter().map(|z| z * 0.9).collect();
        assert!((achievable_rate(10.0, &ch, &mixed) - (1.0 + 10.0 * 0.81f64).log2()).abs() < 1e-12);
        assert!(((1.0 + 10.0 * 0.81f64).log2() - 3.186).abs() < 1e-3);
    }

    #[test]
    fn noise_power_inverts_reference_snr() {
        let g = ArrayGeometry::standard_upa();
        let cfg = ScenarioConfig { snr_db: 13.0, ..Default::default() };
        let s2 = cfg.noise_power(&g);
        let gamma = cfg.p0_watts() * 512.0 * cfg.rho0() / (cfg.r0 * cfg.r0 * s2);
        assert!((10.0 * gamma.log10() - 13.0).abs() < 1e-12);
        assert!((cfg.snr_for_sigma2(&g, cfg.sigma2_dbm(&g)) - 13.0).abs() < 1e-9);
    }

    #[test]
    fn both_scan_paths_agree() {
        let book = small_book();
        let geom = book.geom;
        let cfg = ScenarioConfig { bs_count: 3, buckets: 8, placement: Placement { range_min: 0.2, range_max: 2.0, min_separation: 0.05 }, ..Default::default() };
        let mut rng = stream(5);
        let channels = cfg.draw_channels(&geom, &mut rng).unwrap();
        let fams = station_families(book.len(), 8, 3, 9).unwrap();
        let mut beams: Vec<BsBeams> = fams.iter().map(|f| hmb_beams(&book, f, 3, &PhasePolicy::Zero, None).unwrap()).collect();
        beams[1].phases[2][5] = PhaseVector::new((0..book.len() / 8).map(|i| 0.3 * i as f64).collect());
        let sigma2 = 1e-3 * cfg.p0_watts() * channels[0].beta.powi(2);
        let mut a = stream(77);
        let slow = scan(&book, &beams, &channels, cfg.p0_watts(), sigma2, &mut a).unwrap();
        let mut b = stream(77);
        let noise = unit_noise(&mut b, 24);
        let fast = scan_responses(&Responses::new(&book, &channels), &beams, cfg.p0_watts(), sigma2, &noise).unwrap();
        assert_eq!(slow.slots(), 24);
        for (x, y) in slow.powers.iter().zip(&fast.powers) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-30), "{x} vs {y}");
        }
    }

    #[test]
    fn noiseless_aligned_single_arm_power() {
        let book = small_book();
        let s = 5;
        let p = book.points[s];
        let pose = PolarPose::new(if p.is_far_field() { 1e4 } else { p.r_s * 1.1 }, p.theta_s + 0.01, p.phi_s).unwrap();
        let ch = los_channel(&book.geom, &pose, 1e-7).unwrap();
        let table = BucketTable::blocks(book.len(), book.len(), 0).unwrap();
        let beams = vec![BsBeams::with_zero_phases(vec![table])];
        let mut rng = stream(1);
        let t = scan(&book, &beams, std::slice::from_ref(&ch), 0.5, 0.0, &mut rng).unwrap();
        let w = inner(&ch.unit_response(), book.row(s)).norm();
        let want = 0.5 * book.dim() as f64 * ch.beta.powi(2) * w * w;
        assert!((t.powers[s] - want).abs() < 1e-9 * want);
    }

    #[test]
    fn noise_only_scan_mean_power() {
        let book = small_book();
        let nc = book.len();
        let cfg = ScenarioConfig { bs_count: 1, ..Default::default() };
        let resp = Responses::zeros(1, nc);
        let beams = vec![BsBeams::with_zero_phases(vec![BucketTable::blocks(nc, nc, 0).unwrap()])];
        let sigma2 = 2.5;
        let mut rng = stream(3);
        let mut total = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let noise = unit_noise(&mut rng, nc);
            let t = scan_responses(&resp, &beams, cfg.p0_watts(), sigma2, &noise).unwrap();
            total += t.powers.iter().sum::<f64>();
            count += nc;
        }
        let mean = total / count as f64;
        // Exponential with mean σ²: standard error σ²/√n.
        assert!((mean - sigma2).abs() < 3.0 * sigma2 / (count as f64).sqrt(), "{mean}");
    }

    #[test]
    fn degenerate_hmb_equals_ground_truth() {
        let book = small_book();
        let cfg = ScenarioConfig {
            bs_count: 1,
            buckets: book.len(),
            rounds: 1,
            snr_db: 300.0,
            placement: Placement { range_min: 0.2, range_max: 3.0, min_separation: 0.0 },
            ..Default::default()
        };
        for seed in 0..20 {
            let channels = cfg.draw_channels(&book.geom, &mut stream(seed)).unwrap();
            let out = hmb_train(&book, &cfg, &channels, seed).unwrap();
            assert_eq!(out.gamma_hat[0], Some(ground_truth_beam(&book, &channels[0])));
            assert!(!out.ties[0]);
            assert_eq!(out.slots, book.len());
        }
    }

    #[test]
    fn noiseless_exhaustive_matches_ground_truth() {
        let book = small_book();
        let cfg = ScenarioConfig { bs_count: 3, placement: Placement { range_min: 0.2, range_max: 3.0, min_separation: 0.05 }, ..Default::default() };
        let channels = cfg.draw_channels(&book.geom, &mut stream(8)).unwrap();
        let resp = Responses::new(&book, &channels);
        let all: Vec<usize> = (0..book.len()).collect();
        let noise = vec![Complex64::new(0.0, 0.0); 3 * book.len()];
        let (picks, slots) = exhaustive_train(&resp, &all, 1.0, 0.0, &noise).unwrap();
        for (k, ch) in channels.iter().enumerate() {
            assert_eq!(picks[k], ground_truth_beam(&book, ch));
            assert_eq!(picks[k], resp.best(k));
        }
        assert_eq!(slots, 3 * book.len());
    }

    #[test]
    fn eimb_rounds_identify_direction_noiselessly() {
        let nc = 16;
        let beams = eimb_beams(nc, 4).unwrap();
        assert_eq!(beams.tables[0].bucket(1), &[1, 5, 9, 13]);
        for x in 0..nc {
            let r = beams.tables[0].bucket_of(x);
            let b = beams.tables[1].bucket_of(x);
            let common: Vec<usize> = beams.tables[0].bucket(r).iter().filter(|y| beams.tables[1].bucket(b).contains(y)).copied().collect();
            assert_eq!(common, vec![x]);
            let v = vote(&beams.tables, &[r, 4 + b]).unwrap();
            assert_eq!(v, Vote { index: Some(x), votes: 2, tie: false });
        }
    }

    #[test]
    fn placement_respects_bounds() {
        let p = Placement::default();
        let mut rng = stream(4);
        for _ in 0..50 {
            let poses = place_base_stations(&p, 5, &mut rng).unwrap();
            for (i, a) in poses.iter().enumerate() {
                assert!(a.r >= p.range_min && a.r <= p.range_max);
                for b in &poses[i + 1..] {
                    let (x, y) = (a.position(), b.position());
                    let d: f64 = (0..3).map(|j| (x[j] - y[j]).powi(2)).sum::<f64>().sqrt();
                    assert!(d >= p.min_separation);
                }
            }
        }
        let tight = Placement { range_min: 1.0, range_max: 1.0, min_separation: 10.0 };
        assert!(place_base_stations(&tight, 3, &mut rng).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let book = small_book();
        let cfg = ScenarioConfig { bs_count: 2, buckets: 8, placement: Placement { range_min: 0.2, range_max: 3.0, min_separation: 0.05 }, ..Default::default() };
        let channels = cfg.draw_channels(&book.geom, &mut stream(2)).unwrap();
        let a = hmb_train(&book, &cfg, &channels, 42).unwrap();
        let b = hmb_train(&book, &cfg, &channels, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.slots, 8 * default_rounds(book.len()));
        assert!(a.slot_assignment.iter().all(|s| s.len() == default_rounds(book.len())));
    }
}
