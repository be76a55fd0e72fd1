//! Synthetic dual-polarity multi-channel phantoms and the corrupted
//! calibration/EPI datasets built from them.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::fft2c_planes;
use crate::kspace::{
    interleave, split_interleaved, Dataset, KSpaceGrid, PartialFourier, Polarity, SamplingPattern,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoilModel {
    /// Gaussian magnitude around a point on a ring, times a degree-1 complex
    /// polynomial.
    GaussianLinear,
    /// The degree-1 complex polynomial alone. Maps of any number of coils
    /// span at most three dimensions.
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub ny: usize,
    pub nx: usize,
    pub n_ch: usize,
    /// Radius of the object support relative to half the field of view.
    pub support_fraction: f64,
    pub seed: u64,
    /// Degree of the bivariate polynomial object phase.
    pub phase_poly_degree: usize,
    pub coil_model: CoilModel,
}

impl PhantomSpec {
    pub fn new(ny: usize, nx: usize, n_ch: usize, seed: u64) -> Self {
        Self {
            ny,
            nx,
            n_ch,
            support_fraction: 0.75,
            seed,
            phase_poly_degree: 2,
            coil_model: CoilModel::GaussianLinear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ny < 4 || self.nx < 4 {
            return Err(Error::Parameter(format!(
                "phantom of {}x{} is too small",
                self.ny, self.nx
            )));
        }
        if self.n_ch == 0 {
            return Err(Error::Parameter(
                "phantom needs at least one channel".into(),
            ));
        }
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "support fraction {} must lie in (0, 1]",
                self.support_fraction
            )));
        }
        Ok(())
    }
}

/// Image-domain modulation of the negative polarity relative to the
/// positive one: `scale · exp(i(phi0 + g·(y, x) + nonlinear_amp · P(y, x)))`
/// with pixel coordinates centred on the DC index and `P` a fixed
/// quadratic scaled to a maximum modulus of one over the field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityModel {
    pub phi0: f64,
    /// Radians per pixel along `(y, x)`.
    pub g: [f64; 2],
    pub nonlinear_amp: f64,
    pub scale: f64,
}

impl Default for PolarityModel {
    fn default() -> Self {
        Self {
            phi0: 0.4,
            g: [0.05, 0.08],
            nonlinear_amp: 0.9,
            scale: 1.0,
        }
    }
}

impl PolarityModel {
    /// No difference between the polarities.
    pub fn identity() -> Self {
        Self {
            phi0: 0.0,
            g: [0.0, 0.0],
            nonlinear_amp: 0.0,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.phi0,
            self.g[0],
            self.g[1],
            self.nonlinear_amp,
            self.scale,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.scale <= 0.0 {
            return Err(Error::Parameter(
                "polarity model needs finite values and scale > 0".into(),
            ));
        }
        Ok(())
    }

    /// Interpolarity phase (radians) on an `ny × nx` grid.
    pub fn phase_map(&self, ny: usize, nx: usize) -> Vec<f64> {
        let shape = |u: f64, v: f64| u * u - 0.5 * v * v + 0.8 * u * v;
        let mut peak = 0.0f64;
        for y in 0..ny {
            for x in 0..nx {
                let (u, v) = normalized(y, x, ny, nx);
                peak = peak.max(shape(u, v).abs());
            }
        }
        let mut out = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                let (u, v) = normalized(y, x, ny, nx);
                let dy = y as f64 - (ny / 2) as f64;
                let dx = x as f64 - (nx / 2) as f64;
                let nl = if peak > 0.0 { shape(u, v) / peak } else { 0.0 };
                out.push(self.phi0 + self.g[0] * dy + self.g[1] * dx + self.nonlinear_amp * nl);
            }
        }
        out
    }
}

fn normalized(y: usize, x: usize, ny: usize, nx: usize) -> (f64, f64) {
    (
        (y as f64 - (ny / 2) as f64) / (ny / 2) as f64,
        (x as f64 - (nx / 2) as f64) / (nx / 2) as f64,
    )
}

/// Everything needed to render both polarity grids of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ny: usize,
    pub nx: usize,
    pub n_ch: usize,
    pub magnitude: Vec<f64>,
    /// Pixels inside the outer boundary of the object.
    pub support: Vec<bool>,
    pub phase: Vec<f64>,
    /// Channel-major coil sensitivities.
    pub coils: Vec<Complex64>,
    /// Extra phase applied to odd phase-encode lines of both grids.
    pub line_phase: f64,
}

// Flat inside r < 1 - EDGE, cosine taper to zero at r = 1.
const EDGE: f64 = 0.25;

fn taper(r: f64) -> f64 {
    if r <= 1.0 - EDGE {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * (r - 1.0 + EDGE) / EDGE).cos())
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    /// Normalised radius of pixel offset `(dy, dx)` from the grid centre.
    fn radius(&self, dy: f64, dx: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (py, px) = (dy - self.cy, dx - self.cx);
        let u = c * px + s * py;
        let v = -s * px + c * py;
        ((u / self.ax).powi(2) + (v / self.ay).powi(2)).sqrt()
    }
}

impl Scene {
    /// Random phantom fully determined by `spec` (including its seed).
    pub fn generate(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let (ny, nx) = (spec.ny, spec.nx);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let hy = (ny / 2) as f64 * spec.support_fraction;
        let hx = (nx / 2) as f64 * spec.support_fraction;

        let outer = Ellipse {
            cy: 0.0,
            cx: 0.0,
            ay: hy * rng.random_range(0.85..1.0),
            ax: hx * rng.random_range(0.75..0.95),
            angle: rng.random_range(-0.3..0.3),
            value: 0.6,
        };
        let n_inner = rng.random_range(2..=7);
        let mut inner = Vec::with_capacity(n_inner);
        for _ in 0..n_inner {
            let ay = outer.ay * rng.random_range(0.2..0.55);
            let ax = outer.ax * rng.random_range(0.2..0.55);
            let reach = 1.0 - ay.max(ax) / outer.ay.min(outer.ax);
            let t = rng.random_range(0.0..2.0 * PI);
            let rad = if reach > 0.0 {
                rng.random_range(0.0..reach) * 0.8
            } else {
                0.0
            };
            inner.push(Ellipse {
                cy: rad * outer.ay * t.sin(),
                cx: rad * outer.ax * t.cos(),
                ay,
                ax,
                angle: rng.random_range(0.0..PI),
                value: rng.random_range(0.15..0.6),
            });
        }

        let plane = ny * nx;
        let mut magnitude = vec![0.0; plane];
        let mut support = vec![false; plane];
        for y in 0..ny {
            for x in 0..nx {
                let dy = y as f64 - (ny / 2) as f64;
                let dx = x as f64 - (nx / 2) as f64;
                let r = outer.radius(dy, dx);
                let i = y * nx + x;
                support[i] = r < 1.0;
                let mut m = outer.value * taper(r);
                for e in &inner {
                    m += e.value * taper(e.radius(dy, dx));
                }
                magnitude[i] = if r < 1.0 { m } else { 0.0 };
            }
        }

        let terms = monomials(spec.phase_poly_degree);
        let coef: Vec<f64> = terms.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut phase = vec![0.0; plane];
        for y in 0..ny {
            for x in 0..nx {
                let (u, v) = normalized(y, x, ny, nx);
                phase[y * nx + x] = terms
                    .iter()
                    .zip(&coef)
                    .map(|(&(a, b), c)| c * u.powi(a as i32) * v.powi(b as i32))
                    .sum();
            }
        }
        let peak = phase.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        if peak > 0.0 {
            phase.iter_mut().for_each(|p| *p *= 1.2 / peak);
        }

        let coils = coil_maps(spec, &mut rng);
        Ok(Self {
            ny,
            nx,
            n_ch: spec.n_ch,
            magnitude,
            support,
            phase,
            coils,
            line_phase: 0.0,
        })
    }

    pub fn with_magnitude(&self, magnitude: Vec<f64>) -> Result<Self> {
        if magnitude.len() != self.ny * self.nx {
            return Err(Error::Shape("magnitude length does not match scene".into()));
        }
        Ok(Self {
            magnitude,
            ..self.clone()
        })
    }

    /// Multi-channel image of the positive polarity, channel-major.
    pub fn coil_images(&self) -> Vec<Complex64> {
        let plane = self.ny * self.nx;
        let mut out = Vec::with_capacity(self.n_ch * plane);
        for c in 0..self.n_ch {
            for i in 0..plane {
                out.push(
                    self.coils[c * plane + i]
                        * Complex64::from_polar(self.magnitude[i], self.phase[i]),
                );
            }
        }
        out
    }

    /// Fully sampled k-space of both polarities.
    pub fn render(&self, pol: &PolarityModel) -> Result<(KSpaceGrid, KSpaceGrid)> {
        pol.validate()?;
        let (ny, nx, plane) = (self.ny, self.nx, self.ny * self.nx);
        let pos_img = self.coil_images();
        let theta = pol.phase_map(ny, nx);
        let mut neg_img = pos_img.clone();
        for (i, v) in neg_img.iter_mut().enumerate() {
            *v *= Complex64::from_polar(pol.scale, theta[i % plane]);
        }
        let mut grids = Vec::with_capacity(2);
        for (mut data, p) in [(pos_img, Polarity::Positive), (neg_img, Polarity::Negative)] {
            fft2c_planes(&mut data, ny, nx);
            if self.line_phase != 0.0 {
                let rot = Complex64::from_polar(1.0, self.line_phase);
                for (row, chunk) in data.chunks_exact_mut(nx).enumerate() {
                    if (row % ny) % 2 == 1 {
                        chunk.iter_mut().for_each(|z| *z *= rot);
                    }
                }
            }
            grids.push(KSpaceGrid::from_data(self.n_ch, ny, nx, p, data)?);
        }
        let neg = grids.pop().unwrap();
        let pos = grids.pop().unwrap();
        Ok((pos, neg))
    }
}

fn monomials(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in 0..=total {
            out.push((a, total - a));
        }
    }
    out
}

fn coil_maps(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let (ny, nx) = (spec.ny, spec.nx);
    let mut maps = Vec::with_capacity(spec.n_ch * ny * nx);
    let cplx = |rng: &mut ChaCha8Rng, s: f64| {
        Complex64::from_polar(
            s * rng.random_range(0.5..1.0),
            rng.random_range(0.0..2.0 * PI),
        )
    };
    for c in 0..spec.n_ch {
        let t = 2.0 * PI * c as f64 / spec.n_ch as f64 + rng.random_range(-0.2..0.2);
        let (cy, cx) = (0.9 * t.sin(), 0.9 * t.cos());
        let width = rng.random_range(0.8..1.1);
        let a0 = cplx(rng, 1.0);
        let ay = cplx(rng, 0.4);
        let ax = cplx(rng, 0.4);
        for y in 0..ny {
            for x in 0..nx {
                let (u, v) = normalized(y, x, ny, nx);
                let lin = a0 + ay * u + ax * v;
                let s = match spec.coil_model {
                    CoilModel::Polynomial => lin,
                    CoilModel::GaussianLinear => {
                        let d2 = (u - cy).powi(2) + (v - cx).powi(2);
                        lin * (-d2 / (2.0 * width * width)).exp()
                    }
                };
                maps.push(s);
            }
        }
    }
    maps
}

/// Fully sampled gold-standard k-space of both polarities.
pub fn make_gold(spec: &PhantomSpec, pol: &PolarityModel) -> Result<(KSpaceGrid, KSpaceGrid)> {
    Scene::generate(spec)?.render(pol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    None,
    /// Gaussian blob added to the magnitude; centre in pixels relative to
    /// the grid centre `(dy, dx)`, width is the standard deviation in pixels.
    Hyperintensity {
        center: (f64, f64),
        width: f64,
        amplitude: f64,
    },
    /// Magnitude `m` becomes `max − m` inside the support. `max` defaults to
    /// the current maximum.
    InvertedContrast {
        reference_max: Option<f64>,
    },
    /// Odd phase-encode lines are multiplied by `exp(i·ghost_phase)`.
    ShotGhost {
        ghost_phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Epi,
    Acs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: Corruption,
    pub target: Target,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        Self {
            kind: Corruption::None,
            target: Target::Epi,
        }
    }

    pub fn validate(&self, ny: usize, nx: usize) -> Result<()> {
        match self.kind {
            Corruption::None => Ok(()),
            Corruption::Hyperintensity {
                center,
                width,
                amplitude,
            } => {
                let (hy, hx) = ((ny / 2) as f64, (nx / 2) as f64);
                if !(width > 0.0 && width.is_finite()) || !amplitude.is_finite() {
                    return Err(Error::Parameter(
                        "hyperintensity width must be > 0 and amplitude finite".into(),
                    ));
                }
                if !(center.0.abs() <= hy && center.1.abs() <= hx) {
                    return Err(Error::Parameter(format!(
                        "hyperintensity centre {center:?} lies outside the field of view"
                    )));
                }
                Ok(())
            }
            Corruption::InvertedContrast { reference_max } => match reference_max {
                Some(m) if !m.is_finite() => {
                    Err(Error::Parameter("reference maximum must be finite".into()))
                }
                _ => Ok(()),
            },
            Corruption::ShotGhost { ghost_phase } => {
                if ghost_phase.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter("ghost phase must be finite".into()))
                }
            }
        }
    }
}

/// Applies an image-domain or line-phase corruption to a scene. Blobs and
/// contrast changes act on the magnitude, so they inherit the coil maps and
/// phase of the scene when rendered.
pub fn corrupt(scene: &Scene, c: &CorruptionSpec) -> Result<Scene> {
    c.validate(scene.ny, scene.nx)?;
    let (ny, nx) = (scene.ny, scene.nx);
    match c.kind {
        Corruption::None => Ok(scene.clone()),
        Corruption::Hyperintensity {
            center,
            width,
            amplitude,
        } => {
            let mut m = scene.magnitude.clone();
            for y in 0..ny {
                for x in 0..nx {
                    let dy = y as f64 - (ny / 2) as f64 - center.0;
                    let dx = x as f64 - (nx / 2) as f64 - center.1;
                    m[y * nx + x] +=
                        amplitude * (-(dy * dy + dx * dx) / (2.0 * width * width)).exp();
                }
            }
            scene.with_magnitude(m)
        }
        Corruption::InvertedContrast { reference_max } => {
            let top = reference_max
                .unwrap_or_else(|| scene.magnitude.iter().fold(0.0f64, |a, &b| a.max(b)));
            let m = scene
                .magnitude
                .iter()
                .zip(&scene.support)
                .map(|(&v, &s)| if s { top - v } else { v })
                .collect();
            scene.with_magnitude(m)
        }
        Corruption::ShotGhost { ghost_phase } => Ok(Scene {
            line_phase: scene.line_phase + ghost_phase,
            ..scene.clone()
        }),
    }
}

/// Collapses the channel dimension with fixed complex weights.
pub fn to_single_channel(grid: &KSpaceGrid, weights: &[Complex64]) -> Result<KSpaceGrid> {
    if weights.len() != grid.n_ch() {
        return Err(Error::Shape(format!(
            "{} weights for {} channels",
            weights.len(),
            grid.n_ch()
        )));
    }
    if weights.iter().all(|w| *w == Complex64::new(0.0, 0.0)) {
        return Err(Error::Parameter("channel weights are all zero".into()));
    }
    let plane = grid.plane();
    let mut out = vec![Complex64::new(0.0, 0.0); plane];
    for (c, w) in weights.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(grid.channel(c)) {
            *o += w * v;
        }
    }
    KSpaceGrid::from_data(1, grid.ny(), grid.nx(), grid.polarity(), out)
}

/// Measured EPI grids and the pattern that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSample {
    pub pattern: SamplingPattern,
    pub pos: KSpaceGrid,
    pub neg: KSpaceGrid,
}

pub fn sample_epi(
    gold_pos: &KSpaceGrid,
    gold_neg: &KSpaceGrid,
    accel: usize,
    pf: PartialFourier,
    offset: usize,
) -> Result<EpiSample> {
    let pattern = SamplingPattern::epi(gold_pos.ny(), accel, pf, offset)?;
    let raw = interleave(gold_pos, gold_neg, &pattern)?;
    let (pos, neg) = split_interleaved(&raw, &pattern)?;
    Ok(EpiSample { pattern, pos, neg })
}

/// Named simulation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// ACS rendered from the same scene as the EPI data.
    Matched,
    /// Blob in the EPI data only.
    Hyperintensity,
    /// Blob in the ACS data only.
    HyperintensityAcs,
    /// ACS with inverted magnitude contrast.
    InvertedContrast,
    /// ACS with a shot-to-shot phase error on alternate lines.
    ShotGhost,
    /// Channels combined into one, blob in the ACS data only.
    SingleChannel,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Matched,
        Scenario::Hyperintensity,
        Scenario::HyperintensityAcs,
        Scenario::InvertedContrast,
        Scenario::ShotGhost,
        Scenario::SingleChannel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Matched => "matched",
            Scenario::Hyperintensity => "hyperintensity",
            Scenario::HyperintensityAcs => "hyperintensity-acs",
            Scenario::InvertedContrast => "inverted-contrast",
            Scenario::ShotGhost => "shot-ghost",
            Scenario::SingleChannel => "single-channel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown scenario '{s}'")))
    }

    /// Default corruption of this scenario for an `ny × nx` grid.
    pub fn corruption(self, ny: usize, nx: usize) -> CorruptionSpec {
        let blob = Corruption::Hyperintensity {
            center: (-(ny as f64) * 0.12, nx as f64 * 0.1),
            width: ny.min(nx) as f64 / 14.0,
            amplitude: 0.8,
        };
        let (kind, target) = match self {
            Scenario::Matched => (Corruption::None, Target::Epi),
            Scenario::Hyperintensity => (blob, Target::Epi),
            Scenario::HyperintensityAcs | Scenario::SingleChannel => (blob, Target::Acs),
            Scenario::InvertedContrast => (
                Corruption::InvertedContrast {
                    reference_max: None,
                },
                Target::Acs,
            ),
            Scenario::ShotGhost => (Corruption::ShotGhost { ghost_phase: 0.6 }, Target::Acs),
        };
        CorruptionSpec { kind, target }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub phantom: PhantomSpec,
    pub polarity: PolarityModel,
    pub accel: usize,
    pub pf: PartialFourier,
    pub offset: usize,
    pub corruption: CorruptionSpec,
    /// Channel weights for a single-channel reduction.
    pub combine: Option<Vec<Complex64>>,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, phantom: PhantomSpec, accel: usize) -> Self {
        let corruption = scenario.corruption(phantom.ny, phantom.nx);
        let combine = (scenario == Scenario::SingleChannel).then(|| default_weights(phantom.n_ch));
        Self {
            phantom,
            polarity: PolarityModel::default(),
            accel,
            pf: PartialFourier::FULL,
            offset: 0,
            corruption,
            combine,
        }
    }
}

/// Equal-magnitude weights with a slow phase ramp across channels.
pub fn default_weights(n_ch: usize) -> Vec<Complex64> {
    (0..n_ch)
        .map(|c| Complex64::from_polar(1.0 / (n_ch as f64).sqrt(), 0.5 * c as f64))
        .collect()
}

/// Gold standard, fully sampled ACS and undersampled EPI data for a scenario.
pub fn build_dataset(spec: &ScenarioSpec) -> Result<Dataset> {
    let scene = Scene::generate(&spec.phantom)?;
    let (epi_scene, acs_scene) = match spec.corruption.target {
        Target::Epi => (corrupt(&scene, &spec.corruption)?, scene),
        Target::Acs => (scene.clone(), corrupt(&scene, &spec.corruption)?),
    };
    let (mut gold_pos, mut gold_neg) = epi_scene.render(&spec.polarity)?;
    let (mut acs_pos, mut acs_neg) = acs_scene.render(&spec.polarity)?;
    if let Some(w) = &spec.combine {
        gold_pos = to_single_channel(&gold_pos, w)?;
        gold_neg = to_single_channel(&gold_neg, w)?;
        acs_pos = to_single_channel(&acs_pos, w)?;
        acs_neg = to_single_channel(&acs_neg, w)?;
    }
    let epi = sample_epi(&gold_pos, &gold_neg, spec.accel, spec.pf, spec.offset)?;
    let ds = Dataset {
        epi_pos: epi.pos,
        epi_neg: epi.neg,
        pattern: epi.pattern,
        acs_pos,
        acs_neg,
        acs_pattern: SamplingPattern::fully_sampled(spec.phantom.ny),
        gold: Some((gold_pos, gold_neg)),
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::ifft2c_planes;

    fn spec() -> PhantomSpec {
        PhantomSpec::new(24, 20, 3, 11)
    }

    #[test]
    fn identity_polarity_gives_equal_grids() {
        let (p, n) = make_gold(&spec(), &PolarityModel::identity()).unwrap();
        assert_eq!(p.data(), n.data());
    }

    #[test]
    fn constant_pi_negates() {
        let pol = PolarityModel {
            phi0: PI,
            g: [0.0, 0.0],
            nonlinear_amp: 0.0,
            scale: 1.0,
        };
        let (p, n) = make_gold(&spec(), &pol).unwrap();
        for (a, b) in p.data().iter().zip(n.data()) {
            assert!((a + b).norm() <= 1e-14 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn interpolarity_phase_is_recovered() {
        let s = spec();
        let pol = PolarityModel::default();
        let scene = Scene::generate(&s).unwrap();
        let (p, n) = scene.render(&pol).unwrap();
        let (mut ip, mut inn) = (p.into_data(), n.into_data());
        ifft2c_planes(&mut ip, s.ny, s.nx);
        ifft2c_planes(&mut inn, s.ny, s.nx);
        let theta = pol.phase_map(s.ny, s.nx);
        let plane = s.ny * s.nx;
        let mut checked = 0;
        for i in 0..plane {
            if !scene.support[i] || ip[i].norm() < 1e-3 {
                continue;
            }
            let d = (inn[i] / ip[i]).arg();
            let err = (d - theta[i] + PI).rem_euclid(2.0 * PI) - PI;
            assert!(err.abs() < 1e-8, "pixel {i}: {err}");
            checked += 1;
        }
        assert!(checked > plane / 4);
    }

    #[test]
    fn seed_determines_phantom() {
        let a = make_gold(&spec(), &PolarityModel::default()).unwrap();
        let b = make_gold(&spec(), &PolarityModel::default()).unwrap();
        assert_eq!(a, b);
        let mut other = spec();
        other.seed += 1;
        assert_ne!(make_gold(&other, &PolarityModel::default()).unwrap().0, a.0);
    }

    #[test]
    fn magnitude_vanishes_outside_support() {
        let scene = Scene::generate(&spec()).unwrap();
        for (m, s) in scene.magnitude.iter().zip(&scene.support) {
            if !s {
                assert_eq!(*m, 0.0);
            }
            assert!(*m >= 0.0);
        }
        assert!(scene.support.iter().filter(|s| **s).count() > 20);
    }

    #[test]
    fn zero_amplitude_and_zero_ghost_are_identity() {
        let scene = Scene::generate(&spec()).unwrap();
        for kind in [
            Corruption::Hyperintensity {
                center: (1.0, 2.0),
                width: 2.0,
                amplitude: 0.0,
            },
            Corruption::ShotGhost { ghost_phase: 0.0 },
            Corruption::None,
        ] {
            let c = CorruptionSpec {
                kind,
                target: Target::Epi,
            };
            let pol = PolarityModel::default();
            assert_eq!(
                corrupt(&scene, &c).unwrap().render(&pol).unwrap(),
                scene.render(&pol).unwrap()
            );
        }
    }

    #[test]
    fn inverted_contrast_is_an_involution() {
        let scene = Scene::generate(&spec()).unwrap();
        let top = scene.magnitude.iter().fold(0.0f64, |a, &b| a.max(b));
        let c = CorruptionSpec {
            kind: Corruption::InvertedContrast {
                reference_max: Some(top),
            },
            target: Target::Acs,
        };
        let twice = corrupt(&corrupt(&scene, &c).unwrap(), &c).unwrap();
        for i in 0..scene.magnitude.len() {
            if scene.support[i] {
                assert!((twice.magnitude[i] - scene.magnitude[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hyperintensity_energy_is_preserved_by_transform() {
        let scene = Scene::generate(&spec()).unwrap();
        let c = CorruptionSpec {
            kind: Corruption::Hyperintensity {
                center: (2.0, -1.0),
                width: 1.5,
                amplitude: 0.7,
            },
            target: Target::Epi,
        };
        let bumped = corrupt(&scene, &c).unwrap();
        let pol = PolarityModel::default();
        let (a, _) = scene.render(&pol).unwrap();
        let (b, _) = bumped.render(&pol).unwrap();
        let k_energy: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (y - x).norm_sqr())
            .sum();
        let ia = scene.coil_images();
        let ib = bumped.coil_images();
        let i_energy: f64 = ia.iter().zip(&ib).map(|(x, y)| (y - x).norm_sqr()).sum();
        assert!((k_energy - i_energy).abs() <= 1e-10 * i_energy);
    }

    #[test]
    fn shot_ghost_touches_odd_lines_only() {
        let scene = Scene::generate(&spec()).unwrap();
        let c = CorruptionSpec {
            kind: Corruption::ShotGhost { ghost_phase: 0.7 },
            target: Target::Acs,
        };
        let pol = PolarityModel::default();
        let (a, _) = scene.render(&pol).unwrap();
        let (b, _) = corrupt(&scene, &c).unwrap().render(&pol).unwrap();
        let rot = Complex64::from_polar(1.0, 0.7);
        for ch in 0..a.n_ch() {
            for y in 0..a.ny() {
                for x in 0..a.nx() {
                    let expect = if y % 2 == 1 {
                        a.get(ch, y, x) * rot
                    } else {
                        a.get(ch, y, x)
                    };
                    assert!((b.get(ch, y, x) - expect).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_channel_combination() {
        let (p, _) = make_gold(&PhantomSpec::new(12, 12, 4, 3), &PolarityModel::default()).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0].map(|v| Complex64::new(v, 0.0));
        assert_eq!(to_single_channel(&p, &e1).unwrap().data(), p.channel(0));
        let w = default_weights(4);
        let out = to_single_channel(&p, &w).unwrap();
        // |Σ w_c x_c|² summed = wᵀ G w̄ with G_cd = Σ x_c conj(x_d).
        let mut expect = Complex64::new(0.0, 0.0);
        for c in 0..4 {
            for d in 0..4 {
                let g: Complex64 = p
                    .channel(c)
                    .iter()
                    .zip(p.channel(d))
                    .map(|(a, b)| a * b.conj())
                    .sum();
                expect += w[c] * g * w[d].conj();
            }
        }
        assert!((out.energy() - expect.re).abs() <= 1e-10 * expect.re);
        assert!(matches!(
            to_single_channel(&p, &[Complex64::new(0.0, 0.0); 4]),
            Err(Error::Parameter(_))
        ));
        assert!(to_single_channel(&p, &w[..3]).is_err());
    }

    #[test]
    fn epi_sampling_counts() {
        let (p, n) = make_gold(&PhantomSpec::new(32, 32, 1, 1), &PolarityModel::default()).unwrap();
        let s = sample_epi(&p, &n, 2, PartialFourier::SIX_EIGHTHS, 0).unwrap();
        assert_eq!(s.pattern.count(Polarity::Positive), 6);
        assert_eq!(s.pattern.count(Polarity::Negative), 6);
        let s = sample_epi(&p, &n, 1, PartialFourier::FULL, 0).unwrap();
        assert!(s.pattern.is_fully_acquired());
        for accel in 1..=3 {
            let s = sample_epi(&p, &n, accel, PartialFourier::FULL, 0).unwrap();
            let rows: Vec<usize> = (0..32)
                .filter(|&y| s.pattern.rows_for(Polarity::Positive)[y])
                .collect();
            assert!(rows.windows(2).all(|w| w[1] - w[0] == 2 * accel));
        }
    }

    #[test]
    fn scenarios_build_valid_datasets() {
        for sc in Scenario::ALL {
            let spec = ScenarioSpec::new(sc, PhantomSpec::new(16, 16, 2, 5), 2);
            let ds = build_dataset(&spec).unwrap();
            let expect_ch = if sc == Scenario::SingleChannel { 1 } else { 2 };
            assert_eq!(ds.epi_pos.n_ch(), expect_ch);
            let (gp, _) = ds.gold.as_ref().unwrap();
            match sc {
                Scenario::Matched | Scenario::Hyperintensity => {
                    assert_eq!(
                        sc == Scenario::Matched,
                        gp == &ds.acs_pos.clone().with_polarity(Polarity::Positive)
                    );
                }
                _ => assert_ne!(gp.data(), ds.acs_pos.data()),
            }
            assert_eq!(Scenario::parse(sc.as_str()).unwrap(), sc);
        }
        assert!(Scenario::parse("nope").is_err());
    }
}
