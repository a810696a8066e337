//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::codebook::{CodebookConfig, RingRule};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::multiarm::{LobeGrid, PhasePolicy, PhaseSearch};
use crate::training::{Placement, RankBy, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Accuracy,
    SoftHard,
    FarField,
    Overhead,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Accuracy => "accuracy",
            ExperimentKind::SoftHard => "soft_hard",
            ExperimentKind::FarField => "farfield",
            ExperimentKind::Overhead => "overhead",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "soft_hard" | "softhard" => Ok(Self::SoftHard),
            "farfield" | "far_field" => Ok(Self::FarField),
            "overhead" => Ok(Self::Overhead),
            _ => Err(Error::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

/// Training method as it appears in result rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Hashed multi-arm beams, soft decision, near-field codebook.
    Hmb,
    HmbHard,
    /// Hashed multi-arm beams over the far-field (DFT) sub-codebook.
    HmbDft,
    ExhaustiveNearfield,
    ExhaustiveDft,
    Eimb,
    EimbHard,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Hmb,
        Method::HmbHard,
        Method::HmbDft,
        Method::ExhaustiveNearfield,
        Method::ExhaustiveDft,
        Method::Eimb,
        Method::EimbHard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hmb => "hmb",
            Method::HmbHard => "hmb_hard",
            Method::HmbDft => "hmb_dft",
            Method::ExhaustiveNearfield => "exhaustive_nearfield",
            Method::ExhaustiveDft => "exhaustive_dft",
            Method::Eimb => "eimb",
            Method::EimbHard => "eimb_hard",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }

    /// Exhaustive methods have no bucket parameter.
    pub fn uses_buckets(&self) -> bool {
        !matches!(self, Method::ExhaustiveNearfield | Method::ExhaustiveDft)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub snr_grid_db: Vec<f64>,
    pub b_grid: Vec<usize>,
    /// Codebook sizes for the overhead sweep.
    pub nc_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub out_path: Option<PathBuf>,
    pub geometry: ArrayGeometry,
    pub codebook: CodebookConfig,
    pub scenario: ScenarioConfig,
    /// Hard-decision threshold multiplier `κ`.
    pub kappa: f64,
    /// User range of the far-field check.
    pub far_range: f64,
}

impl ExperimentSpec {
    /// Defaults for one experiment kind.
    pub fn new(experiment: ExperimentKind) -> Self {
        let methods = match experiment {
            ExperimentKind::Accuracy => vec![Method::Hmb, Method::ExhaustiveNearfield, Method::ExhaustiveDft, Method::Eimb],
            ExperimentKind::SoftHard => vec![Method::Hmb, Method::HmbHard, Method::Eimb, Method::EimbHard],
            ExperimentKind::FarField => vec![Method::ExhaustiveNearfield, Method::ExhaustiveDft, Method::Hmb, Method::HmbDft],
            ExperimentKind::Overhead => vec![Method::ExhaustiveNearfield, Method::Hmb, Method::Eimb],
        };
        let b_grid = match experiment {
            ExperimentKind::Accuracy => vec![32, 16, 8],
            _ => vec![32],
        };
        Self {
            experiment,
            snr_grid_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            b_grid,
            nc_grid: vec![128, 256, 512, 1024, 2048, 4096],
            methods,
            trials: 500,
            seed: 2024,
            out_path: None,
            geometry: ArrayGeometry::standard_upa(),
            codebook: CodebookConfig { delta: 0.4, ..CodebookConfig::default() },
            scenario: ScenarioConfig { seed: 2024, ..ScenarioConfig::default() },
            kappa: 1.0,
            far_range: 300.0,
        }
    }

    /// Replaces the master seed everywhere it is copied.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scenario.seed = seed;
        if let PhasePolicy::Optimize(s) = &mut self.scenario.phase {
            s.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        if self.methods.is_empty() || self.b_grid.is_empty() {
            return Err(Error::Precondition("methods and b_grid must be non-empty".into()));
        }
        match self.experiment {
            ExperimentKind::Overhead if self.nc_grid.is_empty() => Err(Error::Precondition("nc_grid must be non-empty".into())),
            ExperimentKind::Overhead => Ok(()),
            _ if self.snr_grid_db.is_empty() => Err(Error::Precondition("snr_grid_db must be non-empty".into())),
            _ => self.scenario.validate(),
        }
    }

    /// Parses a config file body on top of the defaults for its `experiment`
    /// key (`accuracy` when absent).
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut map = parse_pairs(text)?;
        let kind = match map.remove("experiment") {
            Some(v) => ExperimentKind::parse(&v)?,
            None => ExperimentKind::Accuracy,
        };
        let mut spec = Self::new(kind);
        spec.apply(map)?;
        spec.validate()?;
        Ok(spec)
    }

    /// As [`Self::from_config_text`], with `kind` as the default and a
    /// mismatching `experiment` key rejected.
    pub fn from_config_text_as(text: &str, kind: ExperimentKind) -> Result<Self> {
        let mut map = parse_pairs(text)?;
        if let Some(v) = map.remove("experiment") {
            let found = ExperimentKind::parse(&v)?;
            if found != kind {
                return Err(Error::Config(format!("config is for '{}', not '{}'", found.as_str(), kind.as_str())));
            }
        }
        let mut spec = Self::new(kind);
        spec.apply(map)?;
        spec.validate()?;
        Ok(spec)
    }

    fn apply(&mut self, mut map: BTreeMap<String, String>) -> Result<()> {
        let mut take = |k: &str| map.remove(k);
        let (mut m, mut n, mut dx, mut dz, mut lambda, mut fc) = (
            self.geometry.m_count,
            self.geometry.n_count,
            self.geometry.dx,
            self.geometry.dz,
            self.geometry.lambda_c,
            self.geometry.fc,
        );
        set(&mut m, take("m_count"))?;
        set(&mut n, take("n_count"))?;
        set(&mut dx, take("dx"))?;
        set(&mut dz, take("dz"))?;
        set(&mut lambda, take("lambda_c"))?;
        set(&mut fc, take("fc"))?;
        self.geometry = ArrayGeometry::new(m, n, dx, dz, lambda, fc)?;

        if let Some(v) = take("snr_grid_db") {
            self.snr_grid_db = list(&v)?;
        }
        if let Some(v) = take("b_grid") {
            self.b_grid = list(&v)?;
        }
        if let Some(v) = take("nc_grid") {
            self.nc_grid = list(&v)?;
        }
        if let Some(v) = take("methods") {
            self.methods = v.split(',').map(|s| Method::parse(s.trim())).collect::<Result<_>>()?;
        }
        set(&mut self.trials, take("trials"))?;
        set(&mut self.seed, take("seed"))?;
        if let Some(v) = take("out") {
            self.out_path = Some(PathBuf::from(v));
        }
        set(&mut self.kappa, take("kappa"))?;
        set(&mut self.far_range, take("far_range"))?;

        set(&mut self.codebook.delta, take("delta"))?;
        set(&mut self.codebook.r_min, take("r_min"))?;
        if let Some(v) = take("ring_rule") {
            self.codebook.ring_rule = RingRule::parse(&v)?;
        }

        let sc = &mut self.scenario;
        set(&mut sc.bs_count, take("bs_count"))?;
        set(&mut sc.rounds, take("rounds"))?;
        set(&mut sc.buckets, take("buckets"))?;
        set(&mut sc.p0_dbm, take("p0_dbm"))?;
        set(&mut sc.rho0_db, take("rho0_db"))?;
        set(&mut sc.r0, take("r0"))?;
        set(&mut sc.user_count, take("user_count"))?;
        let mut placement: Placement = sc.placement;
        set(&mut placement.range_min, take("range_min"))?;
        set(&mut placement.range_max, take("range_max"))?;
        set(&mut placement.min_separation, take("min_separation"))?;
        sc.placement = placement;
        if let Some(v) = take("rank_by") {
            sc.rank_by = RankBy::parse(&v)?;
        }
        let snr = take("snr_db");
        let sigma2 = take("sigma2_dbm");
        match (snr, sigma2) {
            (Some(_), Some(_)) => return Err(Error::Config("give either snr_db or sigma2_dbm, not both".into())),
            (Some(v), None) => sc.snr_db = num(&v)?,
            (None, Some(v)) => sc.snr_db = sc.snr_for_sigma2(&self.geometry, num(&v)?),
            (None, None) => {}
        }

        let mut search = PhaseSearch { seed: self.seed, ..PhaseSearch::default() };
        let mut budget = 0usize;
        set(&mut budget, take("phase_budget"))?;
        set(&mut search.levels, take("phase_levels"))?;
        set(&mut search.starts, take("phase_starts"))?;
        if let Some(v) = take("lobe_grid") {
            let g: Vec<usize> = list(&v)?;
            if g.len() != 3 || g.contains(&0) {
                return Err(Error::Config("lobe_grid needs three positive cell counts".into()));
            }
            search.grid = LobeGrid { cos_theta: g[0], cos_phi: g[1], inv_r: g[2] };
        }
        sc.seed = self.seed;
        sc.phase = if budget == 0 { PhasePolicy::Zero } else { PhasePolicy::Optimize(PhaseSearch { budget, ..search }) };

        if let Some(k) = map.keys().next() {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        Ok(())
    }

    /// The effective configuration as a config file body.
    pub fn to_config_text(&self) -> String {
        let g = &self.geometry;
        let sc = &self.scenario;
        let join = |v: Vec<String>| v.join(",");
        let mut lines = vec![
            format!("experiment = {}", self.experiment.as_str()),
            format!("snr_grid_db = {}", join(self.snr_grid_db.iter().map(f64::to_string).collect())),
            format!("b_grid = {}", join(self.b_grid.iter().map(usize::to_string).collect())),
            format!("nc_grid = {}", join(self.nc_grid.iter().map(usize::to_string).collect())),
            format!("methods = {}", join(self.methods.iter().map(|m| m.as_str().to_string()).collect())),
            format!("trials = {}", self.trials),
            format!("seed = {}", self.seed),
            format!("m_count = {}", g.m_count),
            format!("n_count = {}", g.n_count),
            format!("dx = {}", g.dx),
            format!("dz = {}", g.dz),
            format!("lambda_c = {}", g.lambda_c),
            format!("fc = {}", g.fc),
            format!("delta = {}", self.codebook.delta),
            format!("r_min = {}", self.codebook.r_min),
            format!("ring_rule = {}", self.codebook.ring_rule.as_str()),
            format!("bs_count = {}", sc.bs_count),
            format!("rounds = {}", sc.rounds),
            format!("buckets = {}", sc.buckets),
            format!("snr_db = {}", sc.snr_db),
            format!("p0_dbm = {}", sc.p0_dbm),
            format!("rho0_db = {}", sc.rho0_db),
            format!("r0 = {}", sc.r0),
            format!("user_count = {}", sc.user_count),
            format!("range_min = {}", sc.placement.range_min),
            format!("range_max = {}", sc.placement.range_max),
            format!("min_separation = {}", sc.placement.min_separation),
            format!("rank_by = {}", sc.rank_by.as_str()),
            format!("kappa = {}", self.kappa),
            format!("far_range = {}", self.far_range),
        ];
        match sc.phase {
            PhasePolicy::Zero => lines.push("phase_budget = 0".into()),
            PhasePolicy::Optimize(s) => {
                lines.push(format!("phase_budget = {}", s.budget));
                lines.push(format!("phase_levels = {}", s.levels));
                lines.push(format!("phase_starts = {}", s.starts));
                lines.push(format!("lobe_grid = {},{},{}", s.grid.cos_theta, s.grid.cos_phi, s.grid.inv_r));
            }
        }
        if let Some(p) = &self.out_path {
            lines.push(format!("out = {}", p.display()));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", no + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("cannot parse value '{v}'")))
}

fn set<T: std::str::FromStr>(slot: &mut T, v: Option<String>) -> Result<()> {
    if let Some(v) = v {
        *slot = num(&v)?;
    }
    Ok(())
}

fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_round_trip() {
        for kind in [ExperimentKind::Accuracy, ExperimentKind::SoftHard, ExperimentKind::FarField, ExperimentKind::Overhead] {
            let spec = ExperimentSpec::new(kind);
            let back = ExperimentSpec::from_config_text(&spec.to_config_text()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn overrides_and_comments() {
        let text = "experiment = soft_hard\n# comment\n trials = 7 \nsnr_grid_db = 0, 10\nbuckets=16 # inline\nrank_by = path_gain\n";
        let spec = ExperimentSpec::from_config_text(text).unwrap();
        assert_eq!(spec.experiment, ExperimentKind::SoftHard);
        assert_eq!(spec.trials, 7);
        assert_eq!(spec.snr_grid_db, vec![0.0, 10.0]);
        assert_eq!(spec.scenario.buckets, 16);
        assert_eq!(spec.scenario.rank_by, RankBy::PathGain);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(ExperimentSpec::from_config_text("trails = 5\n"), Err(Error::Config(_))));
        assert!(ExperimentSpec::from_config_text("trials = 5\ntrials = 6\n").is_err());
        assert!(ExperimentSpec::from_config_text("trials\n").is_err());
        assert!(ExperimentSpec::from_config_text("trials = many\n").is_err());
        assert!(ExperimentSpec::from_config_text("methods = hmb,bogus\n").is_err());
        assert!(ExperimentSpec::from_config_text("snr_db = 3\nsigma2_dbm = -70\n").is_err());
    }

    #[test]
    fn rejects_empty_grids_and_zero_trials() {
        assert!(ExperimentSpec::from_config_text("trials = 0\n").is_err());
        assert!(ExperimentSpec::from_config_text("snr_grid_db = \n").is_err());
        assert!(ExperimentSpec::from_config_text("experiment = overhead\nnc_grid =\n").is_err());
    }

    #[test]
    fn sigma2_sets_reference_snr() {
        let spec = ExperimentSpec::from_config_text("sigma2_dbm = -70\n").unwrap();
        let back = spec.scenario.sigma2_dbm(&spec.geometry);
        assert!((back + 70.0).abs() < 1e-9);
    }

    #[test]
    fn phase_budget_enables_search() {
        let spec = ExperimentSpec::from_config_text("phase_budget = 50\nlobe_grid = 2,2,1\nseed = 9\n").unwrap();
        match spec.scenario.phase {
            PhasePolicy::Optimize(s) => {
                assert_eq!(s.budget, 50);
                assert_eq!(s.grid, LobeGrid { cos_theta: 2, cos_phi: 2, inv_r: 1 });
                assert_eq!(s.seed, 9);
            }
            PhasePolicy::Zero => panic!("expected optimization"),
        }
    }
}
