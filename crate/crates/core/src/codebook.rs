//! Polar-domain single-beam codebook: angle grid, distance rings, pairwise
//! projections and the on-disk matrix format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fresnel::solve_zeta;
use crate::geometry::{inner, steering_vector, ArrayGeometry, DistanceModel, Focus};

/// A polar-domain sampling point. `r_s = f64::INFINITY` is the far-field ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub theta_s: f64,
    pub phi_s: f64,
    pub r_s: f64,
}

impl SamplePoint {
    pub fn new(theta_s: f64, phi_s: f64, r_s: f64) -> Result<Self> {
        if !(phi_s > 0.0 && phi_s < std::f64::consts::PI) {
            return Err(Error::Pose(format!("sample elevation must lie in (0, pi), got {phi_s}")));
        }
        if !(r_s > 0.0) || r_s.is_nan() || !theta_s.is_finite() {
            return Err(Error::Pose(format!("invalid sample point (theta={theta_s}, r={r_s})")));
        }
        Ok(Self { theta_s, phi_s, r_s })
    }

    pub fn far_field(theta_s: f64, phi_s: f64) -> Self {
        Self { theta_s, phi_s, r_s: f64::INFINITY }
    }

    pub fn is_far_field(&self) -> bool {
        self.r_s.is_infinite()
    }

    /// `cos θ · sin φ`, the horizontal direction cosine.
    pub fn psi(&self) -> f64 {
        self.theta_s.cos() * self.phi_s.sin()
    }
}

impl Focus for SamplePoint {
    fn theta(&self) -> f64 {
        self.theta_s
    }
    fn phi(&self) -> f64 {
        self.phi_s
    }
    fn range(&self) -> f64 {
        self.r_s
    }
}

/// Which aperture axis drives the distance-ring spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingRule {
    /// Only the vertical (`M`, `dz`, `sin²φ`) criterion.
    Elevation,
    /// The tighter of the vertical and horizontal (`N`, `dx`, `1 − cos²θ sin²φ`) criteria.
    Union,
}

impl RingRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            RingRule::Elevation => "elevation",
            RingRule::Union => "union",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "elevation" => Ok(RingRule::Elevation),
            "union" => Ok(RingRule::Union),
            other => Err(Error::Config(format!("unknown ring rule '{other}'"))),
        }
    }
}

/// The curvature criterion that ended up setting the ring spacing at one angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingSpacing {
    /// `κ A²`, with `A` the aperture term (`M dz` or `N dx`) and `κ` the
    /// curvature weight (`sin²φ` or `1 − ψ²`).
    pub weighted_aperture_sq: f64,
    /// `κ`, so that `κ/r_p − κ/r_q` is the separated quantity.
    pub weight: f64,
    /// Ring coefficient: ring `t` sits at `coefficient / t`.
    pub coefficient: f64,
}

fn spacing(weight: f64, aperture: f64, lambda: f64, zeta: f64) -> RingSpacing {
    let weighted_aperture_sq = weight * aperture * aperture;
    RingSpacing {
        weighted_aperture_sq,
        weight,
        coefficient: weighted_aperture_sq / (2.0 * lambda * zeta * zeta),
    }
}

/// Ring spacing at angle `(theta, phi)` under `rule`.
pub fn ring_spacing(geom: &ArrayGeometry, theta: f64, phi: f64, zeta: f64, rule: RingRule) -> RingSpacing {
    let sphi = phi.sin();
    let elevation = spacing(sphi * sphi, geom.m_count as f64 * geom.dz, geom.lambda_c, zeta);
    if rule == RingRule::Elevation {
        return elevation;
    }
    let psi = theta.cos() * sphi;
    let azimuth = spacing(1.0 - psi * psi, geom.n_count as f64 * geom.dx, geom.lambda_c, zeta);
    if azimuth.coefficient > elevation.coefficient {
        azimuth
    } else {
        elevation
    }
}

/// Rings `∞, c/1, c/2, …`, stopping before the first ring closer than `r_min`.
pub fn rings_from_coefficient(coefficient: f64, r_min: f64) -> Vec<f64> {
    let mut rings = vec![f64::INFINITY];
    if coefficient <= 0.0 {
        return rings;
    }
    let mut t = 1u32;
    loop {
        let r = coefficient / t as f64;
        if r < r_min {
            break;
        }
        rings.push(r);
        t += 1;
    }
    rings
}

/// Distance rings at elevation `phi_s` under the vertical-aperture criterion alone.
pub fn sample_distances(geom: &ArrayGeometry, phi_s: f64, zeta_delta: f64, r_min: f64) -> Vec<f64> {
    let c = ring_spacing(geom, std::f64::consts::FRAC_PI_2, phi_s, zeta_delta, RingRule::Elevation).coefficient;
    rings_from_coefficient(c, r_min)
}

/// Feasible `(θ, φ)` pairs: `cos φ_s = (2s − M − 1)/M` and
/// `cos θ sin φ_s = (2s' − N − 1)/N`, elevation-major.
pub fn sample_angles(geom: &ArrayGeometry) -> Vec<(f64, f64)> {
    let (mc, nc) = (geom.m_count as f64, geom.n_count as f64);
    let mut out = Vec::new();
    for s in 1..=geom.m_count {
        let cphi = (2.0 * s as f64 - mc - 1.0) / mc;
        let phi = cphi.acos();
        let sphi = phi.sin();
        for t in 1..=geom.n_count {
            let psi = (2.0 * t as f64 - nc - 1.0) / nc;
            if psi.abs() <= sphi {
                let ct = (psi / sphi).clamp(-1.0, 1.0);
                out.push((ct.acos(), phi));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookConfig {
    /// Projection threshold `Δ ∈ (0, 1)`.
    pub delta: f64,
    /// Closest admissible ring in meters.
    pub r_min: f64,
    pub ring_rule: RingRule,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self { delta: 0.5, r_min: 5.0, ring_rule: RingRule::Union }
    }
}

/// Near-field single-beam codebook. Row `s` is the exact steering vector toward `points[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleBeamCodebook {
    pub geom: ArrayGeometry,
    pub points: Vec<SamplePoint>,
    codewords: Vec<Complex64>,
    pub delta: f64,
    pub zeta_delta: f64,
    pub r_min: f64,
    pub ring_rule: RingRule,
}

impl SingleBeamCodebook {
    pub fn from_points(
        geom: ArrayGeometry,
        points: Vec<SamplePoint>,
        delta: f64,
        zeta_delta: f64,
        r_min: f64,
        ring_rule: RingRule,
    ) -> Self {
        let codewords = points
            .par_iter()
            .flat_map_iter(|p| steering_vector(&geom, p, DistanceModel::Exact))
            .collect();
        Self { geom, points, codewords, delta, zeta_delta, r_min, ring_rule }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Codeword length `M·N`.
    pub fn dim(&self) -> usize {
        self.geom.element_count()
    }

    pub fn row(&self, s: usize) -> &[Complex64] {
        let d = self.dim();
        &self.codewords[s * d..(s + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.codewords.chunks_exact(self.dim())
    }

    /// Exact projection `|⟨C(p,:), C(q,:)⟩|` between two rows.
    pub fn row_projection(&self, p: usize, q: usize) -> f64 {
        inner(self.row(p), self.row(q)).norm()
    }

    /// Ring spacing that was used at the angle of point `s`.
    pub fn spacing_at(&self, s: usize) -> RingSpacing {
        let p = &self.points[s];
        ring_spacing(&self.geom, p.theta_s, p.phi_s, self.zeta_delta, self.ring_rule)
    }

    /// Indices of the far-field (infinite-range) rows, in codebook order.
    pub fn far_field_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&s| self.points[s].is_far_field()).collect()
    }

    /// The same angular grid restricted to far-field rings: the DFT-style baseline.
    pub fn far_field_subset(&self) -> SingleBeamCodebook {
        let points = self.far_field_indices().into_iter().map(|s| self.points[s]).collect();
        SingleBeamCodebook::from_points(self.geom, points, self.delta, self.zeta_delta, self.r_min, self.ring_rule)
    }

    /// Text serialization. Layout:
    ///
    /// ```text
    /// hmb-codebook 1
    /// m_count <M>
    /// n_count <N>
    /// dx <m>
    /// dz <m>
    /// lambda_c <m>
    /// fc <Hz>
    /// delta <Δ>
    /// zeta_delta <ζ_Δ>
    /// r_min <m>
    /// ring_rule <union|elevation>
    /// n_c <N_C>
    /// points
    /// <theta> <phi> <r|inf>        (N_C lines)
    /// codewords
    /// <re> <im> ...                 (N_C lines of M·N pairs, n-major)
    /// end
    /// ```
    ///
    /// Floats are written in shortest round-trip form, so reloading is bit-exact.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let g = &self.geom;
        let mut s = String::new();
        let _ = writeln!(s, "hmb-codebook 1");
        let _ = writeln!(s, "m_count {}", g.m_count);
        let _ = writeln!(s, "n_count {}", g.n_count);
        let _ = writeln!(s, "dx {}", g.dx);
        let _ = writeln!(s, "dz {}", g.dz);
        let _ = writeln!(s, "lambda_c {}", g.lambda_c);
        let _ = writeln!(s, "fc {}", g.fc);
        let _ = writeln!(s, "delta {}", self.delta);
        let _ = writeln!(s, "zeta_delta {}", self.zeta_delta);
        let _ = writeln!(s, "r_min {}", self.r_min);
        let _ = writeln!(s, "ring_rule {}", self.ring_rule.as_str());
        let _ = writeln!(s, "n_c {}", self.len());
        let _ = writeln!(s, "points");
        for p in &self.points {
            let _ = writeln!(s, "{} {} {}", p.theta_s, p.phi_s, p.r_s);
        }
        let _ = writeln!(s, "codewords");
        for row in self.rows() {
            let mut first = true;
            for z in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{} {}", z.re, z.im);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = move || -> Result<String> {
            lines.next().ok_or_else(|| Error::Format("unexpected end of codebook file".into()))?.map_err(Error::from)
        };
        if next()?.trim() != "hmb-codebook 1" {
            return Err(Error::Format("missing 'hmb-codebook 1' magic line".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = next()?;
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("expected '{name} <value>', got '{line}'")))?;
            if key != name {
                return Err(Error::Format(format!("expected field '{name}', got '{key}'")));
            }
            Ok(value.trim().to_string())
        };
        let m_count = parse_num(&field("m_count")?)?;
        let n_count = parse_num(&field("n_count")?)?;
        let dx = parse_num(&field("dx")?)?;
        let dz = parse_num(&field("dz")?)?;
        let lambda_c = parse_num(&field("lambda_c")?)?;
        let fc = parse_num(&field("fc")?)?;
        let delta = parse_num(&field("delta")?)?;
        let zeta_delta = parse_num(&field("zeta_delta")?)?;
        let r_min = parse_num(&field("r_min")?)?;
        let ring_rule = RingRule::parse(&field("ring_rule")?)?;
        let n_c: usize = parse_num(&field("n_c")?)?;
        let geom = ArrayGeometry::new(m_count, n_count, dx, dz, lambda_c, fc)?;
        expect_line(&next()?, "points")?;
        let mut points = Vec::with_capacity(n_c);
        for _ in 0..n_c {
            let line = next()?;
            let v: Vec<f64> = line.split_whitespace().map(parse_num).collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Format(format!("sample point line needs 3 values: '{line}'")));
            }
            points.push(SamplePoint::new(v[0], v[1], v[2])?);
        }
        expect_line(&next()?, "codewords")?;
        let dim = geom.element_count();
        let mut codewords = Vec::with_capacity(n_c * dim);
        for _ in 0..n_c {
            let line = next()?;
            let v: Vec<f64> = line.split_whitespace().map(parse_num).collect::<Result<_>>()?;
            if v.len() != 2 * dim {
                return Err(Error::Format(format!("codeword row has {} values, expected {}", v.len(), 2 * dim)));
            }
            codewords.extend(v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])));
        }
        expect_line(&next()?, "end")?;
        Ok(Self { geom, points, codewords, delta, zeta_delta, r_min, ring_rule })
    }

    /// SHA-256 of the text serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| Error::Format(format!("cannot parse number '{s}'")))
}

fn expect_line(line: &str, want: &str) -> Result<()> {
    if line.trim() == want {
        Ok(())
    } else {
        Err(Error::Format(format!("expected '{want}', got '{line}'")))
    }
}

/// Builds the polar codebook: every feasible angle pair crossed with its
/// rings, elevation-major, azimuth next, rings innermost with `∞` first.
pub fn build_codebook(geom: &ArrayGeometry, cfg: &CodebookConfig) -> Result<SingleBeamCodebook> {
    if !(cfg.r_min > 0.0) {
        return Err(Error::Precondition(format!("r_min must be positive, got {}", cfg.r_min)));
    }
    let zeta = solve_zeta(cfg.delta)?;
    let mut points = Vec::new();
    for (theta, phi) in sample_angles(geom) {
        let c = ring_spacing(geom, theta, phi, zeta, cfg.ring_rule).coefficient;
        for r in rings_from_coefficient(c, cfg.r_min) {
            points.push(SamplePoint { theta_s: theta, phi_s: phi, r_s: r });
        }
    }
    Ok(SingleBeamCodebook::from_points(*geom, points, cfg.delta, zeta, cfg.r_min, cfg.ring_rule))
}

/// `|⟨a(p), a(q)⟩|`. The Taylor branch evaluates the separable double sum over
/// the horizontal and vertical phase differences directly.
pub fn projection(geom: &ArrayGeometry, p: &SamplePoint, q: &SamplePoint, mode: DistanceModel) -> f64 {
    match mode {
        DistanceModel::Exact => {
            let a = steering_vector(geom, p, DistanceModel::Exact);
            let b = steering_vector(geom, q, DistanceModel::Exact);
            inner(&a, &b).norm()
        }
        DistanceModel::Taylor => {
            let k = geom.wavenumber();
            let curv = |r: f64| if r.is_infinite() { 0.0 } else { 1.0 / (2.0 * r) };
            let (psi_p, psi_q) = (p.psi(), q.psi());
            let (sp, sq) = (p.phi_s.sin(), q.phi_s.sin());
            let lin_n = psi_p - psi_q;
            let quad_n = (1.0 - psi_p * psi_p) * curv(p.r_s) - (1.0 - psi_q * psi_q) * curv(q.r_s);
            let lin_m = p.phi_s.cos() - q.phi_s.cos();
            let quad_m = sp * sp * curv(p.r_s) - sq * sq * curv(q.r_s);
            let sum_n: Complex64 = (0..geom.n_count)
                .map(|j| {
                    let ndx = geom.n_index(j) * geom.dx;
                    Complex64::from_polar(1.0, k * (ndx * lin_n + ndx * ndx * quad_n))
                })
                .sum();
            let sum_m: Complex64 = (0..geom.m_count)
                .map(|i| {
                    let mdz = geom.m_index(i) * geom.dz;
                    Complex64::from_polar(1.0, k * (mdz * lin_m + mdz * mdz * quad_m))
                })
                .sum();
            sum_n.norm() * sum_m.norm() / geom.element_count() as f64
        }
    }
}

/// `η = max_{p≠q} |⟨C(p,:), C(q,:)⟩|`, exhaustively.
pub fn max_cross_projection(book: &SingleBeamCodebook) -> Result<f64> {
    if book.len() < 2 {
        return Err(Error::Precondition("max cross projection needs at least two codewords".into()));
    }
    let n = book.len();
    let eta = (0..n)
        .into_par_iter()
        .map(|p| ((p + 1)..n).map(|q| book.row_projection(p, q)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::standard_upa()
    }

    #[test]
    fn elevation_grid_for_four_rows() {
        let g = geom();
        let mut cphis: Vec<f64> = sample_angles(&g).iter().map(|&(_, phi)| phi.cos()).collect();
        cphis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let want = [-0.75, -0.25, 0.25, 0.75];
        assert_eq!(cphis.len(), 4);
        for (got, want) in cphis.iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_array_has_broadside_elevation() {
        let g = ArrayGeometry::new(1, 8, 0.005, 0.005, 0.01, 28e9).unwrap();
        let angles = sample_angles(&g);
        assert_eq!(angles.len(), 8);
        assert!(angles.iter().all(|&(_, phi)| (phi - FRAC_PI_2).abs() < 1e-12));
    }

    #[test]
    fn angle_pairs_are_feasible() {
        let g = geom();
        let angles = sample_angles(&g);
        // 84 azimuth cells at |cos φ| = 3/4 and 124 at |cos φ| = 1/4.
        assert_eq!(angles.len(), 2 * 84 + 2 * 124);
        for &(theta, phi) in &angles {
            assert!((theta.cos() * phi.sin()).abs() <= phi.sin() + 1e-15);
        }
    }

    #[test]
    fn elevation_rule_only_leaves_far_ring() {
        let g = geom();
        let zeta = solve_zeta(0.5).unwrap();
        let rings = sample_distances(&g, FRAC_PI_2, zeta, 5.0);
        assert_eq!(rings, vec![f64::INFINITY]);
        let r1 = ring_spacing(&g, FRAC_PI_2, FRAC_PI_2, zeta, RingRule::Elevation).coefficient;
        assert!((r1 - 16.0 * 0.000025 / (2.0 * 0.01 * zeta * zeta)).abs() < 1e-15);
        assert!(r1 < 0.01);
    }

    #[test]
    fn finite_rings_are_separated() {
        let g = geom();
        let zeta = solve_zeta(0.5).unwrap();
        let c = ring_spacing(&g, 1.2, 1.4, zeta, RingRule::Union);
        let rings = rings_from_coefficient(c.coefficient, 0.5);
        assert!(rings.len() > 3);
        assert!(rings[0].is_infinite());
        let bound = 2.0 * g.lambda_c * zeta * zeta / c.weighted_aperture_sq;
        for (a, b) in rings.iter().zip(rings.iter().skip(1)) {
            let gap = (1.0 / a - 1.0 / b).abs();
            assert!((gap - bound).abs() <= 1e-9 * bound);
        }
    }

    #[test]
    fn trivial_codebook() {
        let g = ArrayGeometry::new(1, 1, 0.005, 0.005, 0.01, 28e9).unwrap();
        let book = build_codebook(&g, &CodebookConfig { delta: 0.7, ..Default::default() }).unwrap();
        assert_eq!(book.len(), 1);
        assert!((book.row(0)[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(max_cross_projection(&book).is_err());
    }

    #[test]
    fn self_projection_is_one_and_far_field_null() {
        let g = geom();
        let p = SamplePoint::new(1.1, 1.3, 12.0).unwrap();
        assert!((projection(&g, &p, &p, DistanceModel::Exact) - 1.0).abs() < 1e-12);
        assert!((projection(&g, &p, &p, DistanceModel::Taylor) - 1.0).abs() < 1e-12);
        let phi = FRAC_PI_2;
        let a = SamplePoint::far_field((0.1f64).acos(), phi);
        let b = SamplePoint::far_field((0.1f64 + 2.0 / 128.0).acos(), phi);
        assert!(projection(&g, &a, &b, DistanceModel::Exact) < 1e-12);
        assert!(projection(&g, &a, &b, DistanceModel::Taylor) < 1e-12);
    }

    #[test]
    fn adjacent_rings_project_near_threshold() {
        let g = geom();
        let zeta = solve_zeta(0.5).unwrap();
        let (theta, phi) = (FRAC_PI_2, FRAC_PI_2);
        let c = ring_spacing(&g, theta, phi, zeta, RingRule::Union).coefficient;
        let rings = rings_from_coefficient(c, 1.0);
        for w in rings.windows(2) {
            let p = SamplePoint { theta_s: theta, phi_s: phi, r_s: w[0] };
            let q = SamplePoint { theta_s: theta, phi_s: phi, r_s: w[1] };
            let f = projection(&g, &p, &q, DistanceModel::Exact);
            assert!(f <= 0.55, "adjacent ring projection {f}");
        }
    }

    #[test]
    fn exact_and_taylor_projections_agree_at_long_range() {
        let g = geom();
        let pts = [
            SamplePoint::new(1.3, 1.4, 40.0).unwrap(),
            SamplePoint::new(1.31, 1.35, 60.0).unwrap(),
            SamplePoint::far_field(1.32, 1.4),
            SamplePoint::new(1.29, 1.45, 45.0).unwrap(),
        ];
        for p in &pts {
            for q in &pts {
                let e = projection(&g, p, q, DistanceModel::Exact);
                let t = projection(&g, p, q, DistanceModel::Taylor);
                assert!((e - t).abs() < 1e-3, "{e} vs {t}");
            }
        }
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let g = ArrayGeometry::new(2, 8, 0.005, 0.005, 0.01, 28e9).unwrap();
        let book = build_codebook(&g, &CodebookConfig { delta: 0.5, r_min: 0.05, ring_rule: RingRule::Union }).unwrap();
        let text = book.to_text();
        let back = SingleBeamCodebook::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, book);
        assert_eq!(back.to_text(), text);
        assert!(SingleBeamCodebook::read_from("nonsense\n".as_bytes()).is_err());
    }
}
