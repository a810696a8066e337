//! Uniform planar array geometry, antenna-to-point distances, spherical-wave
//! steering vectors and line-of-sight channel draws.
//!
//! Elements are indexed by the centered half-integer grid
//! `m ∈ {−(M−1)/2, …, (M−1)/2}` (vertical, spacing `dz`) and
//! `n ∈ {−(N−1)/2, …, (N−1)/2}` (horizontal, spacing `dx`). Flattened vectors
//! are laid out n-major, so element `(i, j)` (0-based m and n positions) sits
//! at `j * M + i`. This is the layout of `v_x ⊗ v_z`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Physical aperture of an `M × N` uniform planar array in the xz-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    /// Vertical element count `M`.
    pub m_count: usize,
    /// Horizontal element count `N`.
    pub n_count: usize,
    /// Horizontal spacing in meters.
    pub dx: f64,
    /// Vertical spacing in meters.
    pub dz: f64,
    /// Carrier wavelength in meters. All phase terms are derived from this.
    pub lambda_c: f64,
    /// Carrier frequency in Hz. Stored for reporting only.
    pub fc: f64,
}

impl ArrayGeometry {
    pub fn new(m_count: usize, n_count: usize, dx: f64, dz: f64, lambda_c: f64, fc: f64) -> Result<Self> {
        if m_count == 0 || n_count == 0 {
            return Err(Error::Geometry(format!("element counts must be >= 1, got {m_count}x{n_count}")));
        }
        if !(dx > 0.0 && dz > 0.0 && lambda_c > 0.0) || !(dx.is_finite() && dz.is_finite() && lambda_c.is_finite()) {
            return Err(Error::Geometry(format!(
                "spacings and wavelength must be finite and positive (dx={dx}, dz={dz}, lambda={lambda_c})"
            )));
        }
        Ok(Self { m_count, n_count, dx, dz, lambda_c, fc })
    }

    /// The 4 × 128 half-wavelength array at λ = 1 cm used throughout the experiments.
    pub fn standard_upa() -> Self {
        Self {
            m_count: 4,
            n_count: 128,
            dx: 0.005,
            dz: 0.005,
            lambda_c: 0.01,
            fc: 28e9,
        }
    }

    pub fn element_count(&self) -> usize {
        self.m_count * self.n_count
    }

    /// Centered vertical index of the `i`-th row.
    #[inline]
    pub fn m_index(&self, i: usize) -> f64 {
        i as f64 - (self.m_count as f64 - 1.0) / 2.0
    }

    /// Centered horizontal index of the `j`-th column.
    #[inline]
    pub fn n_index(&self, j: usize) -> f64 {
        j as f64 - (self.n_count as f64 - 1.0) / 2.0
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda_c
    }

    /// Largest aperture side, `max(N·dx, M·dz)`.
    pub fn aperture(&self) -> f64 {
        (self.n_count as f64 * self.dx).max(self.m_count as f64 * self.dz)
    }

    /// Rayleigh distance `2 D² / λ` with `D` the largest aperture side.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.lambda_c
    }
}

/// Anything that can be expressed as a focal point in BS-centric polar coordinates.
///
/// `range()` may return `f64::INFINITY` for plane-wave (far-field) foci.
pub trait Focus {
    fn theta(&self) -> f64;
    fn phi(&self) -> f64;
    fn range(&self) -> f64;
}

/// Range, azimuth and elevation of a point relative to the array center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPose {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl PolarPose {
    /// Validates `r > 0` and `phi ∈ (0, π)`; `theta` is wrapped into `[0, 2π)`.
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Pose(format!("range must be finite and positive, got {r}")));
        }
        if !(phi > 0.0 && phi < PI) {
            return Err(Error::Pose(format!("elevation must lie in (0, pi), got {phi}")));
        }
        if !theta.is_finite() {
            return Err(Error::Pose(format!("azimuth must be finite, got {theta}")));
        }
        Ok(Self { r, theta: theta.rem_euclid(2.0 * PI), phi })
    }

    /// Cartesian position of the pose.
    pub fn position(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [self.r * ct * sp, self.r * st * sp, self.r * cp]
    }
}

impl Focus for PolarPose {
    fn theta(&self) -> f64 {
        self.theta
    }
    fn phi(&self) -> f64 {
        self.phi
    }
    fn range(&self) -> f64 {
        self.r
    }
}

/// Which distance model to use when forming phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceModel {
    Exact,
    Taylor,
}

/// Euclidean distance between element `(m, n)` and the pose.
pub fn exact_distance(geom: &ArrayGeometry, pose: &PolarPose, m: f64, n: f64) -> f64 {
    let [x, y, z] = pose.position();
    let x = x + n * geom.dx;
    let z = z + m * geom.dz;
    (x * x + y * y + z * z).sqrt()
}

/// Second-order expansion of [`exact_distance`] in `dx/r` and `dz/r`.
pub fn taylor_distance(geom: &ArrayGeometry, pose: &PolarPose, m: f64, n: f64) -> f64 {
    pose.r + taylor_excess(geom, pose.theta, pose.phi, pose.r, m, n)
}

/// `D(m, n) − r` under the given model, with `r = ∞` treated as the plane-wave limit.
///
/// The exact branch uses `(D² − r²) / (D + r)` so the excess path keeps full
/// relative precision at long range.
pub fn excess_path<F: Focus + ?Sized>(geom: &ArrayGeometry, focus: &F, m: f64, n: f64, model: DistanceModel) -> f64 {
    let (theta, phi, r) = (focus.theta(), focus.phi(), focus.range());
    match model {
        DistanceModel::Taylor => taylor_excess(geom, theta, phi, r, m, n),
        DistanceModel::Exact => {
            let psi = theta.cos() * phi.sin();
            let cphi = phi.cos();
            let ndx = n * geom.dx;
            let mdz = m * geom.dz;
            if r.is_infinite() {
                return ndx * psi + mdz * cphi;
            }
            let q = ndx * ndx + 2.0 * r * ndx * psi + mdz * mdz + 2.0 * r * mdz * cphi;
            let d = (r * r + q).sqrt();
            q / (d + r)
        }
    }
}

fn taylor_excess(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64, m: f64, n: f64) -> f64 {
    let psi = theta.cos() * phi.sin();
    let (sphi, cphi) = phi.sin_cos();
    let ndx = n * geom.dx;
    let mdz = m * geom.dz;
    let linear = ndx * psi + mdz * cphi;
    if r.is_infinite() {
        return linear;
    }
    linear + ndx * ndx * (1.0 - psi * psi) / (2.0 * r) + mdz * mdz * sphi * sphi / (2.0 * r)
}

/// Unit-norm spherical-wave steering vector toward `focus`.
pub fn steering_vector<F: Focus + ?Sized>(geom: &ArrayGeometry, focus: &F, model: DistanceModel) -> Vec<Complex64> {
    let k = geom.wavenumber();
    let scale = 1.0 / (geom.element_count() as f64).sqrt();
    let mut out = Vec::with_capacity(geom.element_count());
    for j in 0..geom.n_count {
        let n = geom.n_index(j);
        for i in 0..geom.m_count {
            let m = geom.m_index(i);
            let phase = k * excess_path(geom, focus, m, n, model);
            out.push(Complex64::from_polar(scale, phase));
        }
    }
    out
}

/// Horizontal and vertical factors of the Taylor-mode steering vector, each
/// unit-norm, so that `steering_vector(.., Taylor) = v_x ⊗ v_z`.
pub fn taylor_factors<F: Focus + ?Sized>(geom: &ArrayGeometry, focus: &F) -> (Vec<Complex64>, Vec<Complex64>) {
    let k = geom.wavenumber();
    let (theta, phi, r) = (focus.theta(), focus.phi(), focus.range());
    let psi = theta.cos() * phi.sin();
    let (sphi, cphi) = phi.sin_cos();
    let curv = |a: f64| if r.is_infinite() { 0.0 } else { a / (2.0 * r) };
    let sx = 1.0 / (geom.n_count as f64).sqrt();
    let sz = 1.0 / (geom.m_count as f64).sqrt();
    let vx = (0..geom.n_count)
        .map(|j| {
            let ndx = geom.n_index(j) * geom.dx;
            Complex64::from_polar(sx, k * (ndx * psi + curv(ndx * ndx * (1.0 - psi * psi))))
        })
        .collect();
    let vz = (0..geom.m_count)
        .map(|i| {
            let mdz = geom.m_index(i) * geom.dz;
            Complex64::from_polar(sz, k * (mdz * cphi + curv(mdz * mdz * sphi * sphi)))
        })
        .collect();
    (vx, vz)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One LoS-dominated channel draw from a BS at `bs_pose` to the user at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `h = √(MN) β e^{−j2πr/λ} g`.
    pub gains: Vec<Complex64>,
    /// Path gain `√ρ₀ / r`.
    pub beta: f64,
    pub bs_pose: PolarPose,
}

impl ChannelRealization {
    /// The unit-norm steering component `g`.
    pub fn unit_response(&self) -> Vec<Complex64> {
        let s = 1.0 / norm(&self.gains);
        self.gains.iter().map(|z| z * s).collect()
    }
}

/// Line-of-sight channel with exact spherical-wave phases.
pub fn los_channel(geom: &ArrayGeometry, pose: &PolarPose, rho0: f64) -> Result<ChannelRealization> {
    if !(rho0 > 0.0) {
        return Err(Error::Precondition(format!("reference power gain must be positive, got {rho0}")));
    }
    let beta = rho0.sqrt() / pose.r;
    let amplitude = (geom.element_count() as f64).sqrt() * beta;
    let common = Complex64::from_polar(amplitude, -geom.wavenumber() * pose.r);
    let gains = steering_vector(geom, pose, DistanceModel::Exact)
        .into_iter()
        .map(|g| common * g)
        .collect();
    Ok(ChannelRealization { gains, beta, bs_pose: *pose })
}

/// Converts decibels to a linear power ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn pose(r: f64, theta: f64, phi: f64) -> PolarPose {
        PolarPose::new(r, theta, phi).unwrap()
    }

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(ArrayGeometry::new(0, 4, 0.005, 0.005, 0.01, 28e9).is_err());
        assert!(ArrayGeometry::new(4, 4, -0.005, 0.005, 0.01, 28e9).is_err());
        assert!(ArrayGeometry::new(4, 4, 0.005, 0.005, 0.0, 28e9).is_err());
        assert!(PolarPose::new(0.0, 1.0, 1.0).is_err());
        assert!(PolarPose::new(1.0, 1.0, PI).is_err());
    }

    #[test]
    fn centered_indices_for_even_and_odd_counts() {
        let g = ArrayGeometry::new(4, 3, 0.005, 0.005, 0.01, 28e9).unwrap();
        let ms: Vec<f64> = (0..4).map(|i| g.m_index(i)).collect();
        let ns: Vec<f64> = (0..3).map(|j| g.n_index(j)).collect();
        assert_eq!(ms, vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(ns, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn center_element_distance_is_range() {
        let g = ArrayGeometry::new(1, 1, 0.005, 0.005, 0.01, 28e9).unwrap();
        assert_eq!(exact_distance(&g, &pose(10.0, 0.3, 1.1), 0.0, 0.0), 10.0);
        let g = ArrayGeometry::standard_upa();
        assert_relative_eq!(exact_distance(&g, &pose(81.92, 2.0, 0.7), 0.0, 0.0), 81.92, epsilon = 1e-12);
        assert_eq!(taylor_distance(&g, &pose(81.92, 2.0, 0.7), 0.0, 0.0), 81.92);
    }

    #[test]
    fn offset_element_distance() {
        let g = ArrayGeometry::standard_upa();
        // n = 1 gives an x-offset of exactly dx.
        let d = exact_distance(&g, &pose(10.0, FRAC_PI_2, FRAC_PI_2), 0.0, 1.0);
        assert_relative_eq!(d, (100.0f64 + 0.000025).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(d, 10.00000125, epsilon = 1e-9);
    }

    #[test]
    fn taylor_at_boresight_has_no_linear_term() {
        let g = ArrayGeometry::standard_upa();
        let p = pose(12.0, FRAC_PI_2, FRAC_PI_2);
        for &(m, n) in &[(1.5, 63.5), (-0.5, -10.5), (0.5, 2.5)] {
            let expect = 12.0 + n * n * g.dx * g.dx / 24.0 + m * m * g.dz * g.dz / 24.0;
            assert_relative_eq!(taylor_distance(&g, &p, m, n), expect, epsilon = 1e-12);
        }
    }

    fn worst_taylor_error(g: &ArrayGeometry, p: &PolarPose) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..g.m_count {
            for j in 0..g.n_count {
                let (m, n) = (g.m_index(i), g.n_index(j));
                worst = worst.max((taylor_distance(g, p, m, n) - exact_distance(g, p, m, n)).abs());
            }
        }
        worst
    }

    #[test]
    fn taylor_error_below_tenth_of_millimeter_at_ten_meters() {
        let g = ArrayGeometry::standard_upa();
        // Near broadside the third-order term is small; off broadside it is not
        // (about 1.5e-4 m at theta=0.3, phi=0.5), so only the broadside cone is checked.
        for &(theta, phi) in &[(FRAC_PI_2, FRAC_PI_2), (1.5, 1.6), (1.65, 1.45)] {
            let worst = worst_taylor_error(&g, &pose(10.0, theta, phi));
            assert!(worst < 1e-4, "worst Taylor error {worst} at theta={theta}, phi={phi}");
        }
        assert!(worst_taylor_error(&g, &pose(10.0, 0.3, 0.5)) > 1e-4);
    }

    #[test]
    fn stable_excess_matches_naive_difference() {
        let g = ArrayGeometry::standard_upa();
        let p = pose(7.0, 0.9, 1.3);
        for &(m, n) in &[(1.5, 63.5), (-1.5, -63.5), (0.5, 0.5)] {
            let naive = exact_distance(&g, &p, m, n) - p.r;
            assert_relative_eq!(excess_path(&g, &p, m, n, DistanceModel::Exact), naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_element_steering_is_one() {
        let g = ArrayGeometry::new(1, 1, 0.005, 0.005, 0.01, 28e9).unwrap();
        let v = steering_vector(&g, &pose(3.0, 1.0, 1.0), DistanceModel::Exact);
        assert_eq!(v.len(), 1);
        assert_relative_eq!(v[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn taylor_steering_is_kronecker_of_factors() {
        let g = ArrayGeometry::standard_upa();
        let p = pose(9.0, 1.2, 1.7);
        let full = steering_vector(&g, &p, DistanceModel::Taylor);
        let (vx, vz) = taylor_factors(&g, &p);
        let kr = kron(&vx, &vz);
        let diff = full.iter().zip(&kr).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "kronecker mismatch {diff}");
    }

    #[test]
    fn channel_gain_scaling() {
        let g = ArrayGeometry::standard_upa();
        let rho0 = db_to_linear(-72.0);
        let c10 = los_channel(&g, &pose(10.0, 1.0, 1.4), rho0).unwrap();
        let c20 = los_channel(&g, &pose(20.0, 1.0, 1.4), rho0).unwrap();
        assert_relative_eq!(c10.beta, 2.512e-5, max_relative = 1e-3);
        assert_relative_eq!(c10.beta / c20.beta, 2.0, epsilon = 1e-12);
        assert_relative_eq!(norm(&c10.gains), (512f64).sqrt() * c10.beta, max_relative = 1e-12);
        assert!(los_channel(&g, &pose(10.0, 1.0, 1.4), 0.0).is_err());
    }

    #[test]
    fn channel_phase_matches_path_length() {
        let g = ArrayGeometry::standard_upa();
        let p = pose(15.0, 0.7, 1.2);
        let c = los_channel(&g, &p, 1e-7).unwrap();
        let k = g.wavenumber();
        for &(i, j) in &[(0usize, 0usize), (3, 127), (1, 64)] {
            let d = exact_distance(&g, &p, g.m_index(i), g.n_index(j));
            let expect = (-k * p.r + k * (d - p.r)).rem_euclid(2.0 * PI);
            let got = c.gains[j * g.m_count + i].arg().rem_euclid(2.0 * PI);
            let diff = (expect - got).abs();
            assert!(diff.min(2.0 * PI - diff) < 1e-6, "phase mismatch {diff}");
        }
    }

    #[test]
    fn rayleigh_distance_of_standard_array() {
        assert_relative_eq!(ArrayGeometry::standard_upa().rayleigh_distance(), 81.92, epsilon = 1e-9);
    }
}
