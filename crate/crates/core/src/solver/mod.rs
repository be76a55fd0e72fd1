//! RAC-LORAKS and AC-LORAKS reconstruction by multiplicative half-quadratic
//! majorize-minimize, plus the zero-fill baseline.
//!
//! Each outer iteration freezes the subspaces of the current iterate (the
//! approximate C nullspace `N_c` and the S complement of the leading `r`
//! right singular vectors) and then lowers the resulting quadratic over the
//! unmeasured samples with conjugate gradient. Measured samples are never
//! written.
//!
//! `λ` is applied as given. Both penalty terms are homogeneous of degree two
//! in the data, so their ratio, and with it the effect of `λ`, does not
//! depend on the overall data scale.

mod cg;

pub use cg::CgStats;

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{Dataset, KSpaceGrid, Polarity};
use crate::lifting::{LiftKind, Lifter, Neighborhood};
use crate::subspace::{
    penalty_jr, right_split, singular_values, suggest_rank, GramSpectrum, NullspaceBasis, RankPlan,
    RankSide, RankSuggestion,
};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_MAX_OUTER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_CG_MAX: usize = 250;
pub const DEFAULT_CG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    /// Weight of the S penalty.
    pub lambda: f64,
    /// Trust placed in the ACS rows of the stacked C matrix.
    pub eta: f64,
    pub ranks: RankPlan,
    /// Neighbourhood radius of both liftings.
    pub radius: usize,
    pub max_outer: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    pub cg_max: usize,
    /// Relative residual at which an inner solve stops.
    pub cg_tol: f64,
    /// Treat unmeasured ACS samples as unknowns.
    pub optimize_acs: bool,
}

impl ReconConfig {
    pub fn new(ranks: RankPlan) -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            eta: DEFAULT_ETA,
            ranks,
            radius: DEFAULT_RADIUS,
            max_outer: DEFAULT_MAX_OUTER,
            tol: DEFAULT_TOL,
            cg_max: DEFAULT_CG_MAX,
            cg_tol: DEFAULT_CG_TOL,
            optimize_acs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Parameter(format!("{what} = {v} is out of range"));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", self.lambda));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(bad("eta", self.eta));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(bad("tol", self.tol));
        }
        if self.cg_tol.is_nan() || self.cg_tol <= 0.0 {
            return Err(bad("cg_tol", self.cg_tol));
        }
        if self.radius == 0 {
            return Err(Error::Parameter("radius must be at least 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Parameter("max_outer must be at least 1".into()));
        }
        Ok(())
    }

    /// Every parameter as `(name, value)` text, for run manifests.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda", format!("{:.16e}", self.lambda)),
            ("eta", format!("{:.16e}", self.eta)),
            ("rank_s", self.ranks.rank_s.to_string()),
            ("nullspace_p", self.ranks.nullspace_p.to_string()),
            ("radius", self.radius.to_string()),
            ("max_outer", self.max_outer.to_string()),
            ("tol", format!("{:.16e}", self.tol)),
            ("cg_max", self.cg_max.to_string()),
            ("cg_tol", format!("{:.16e}", self.cg_tol)),
            ("optimize_acs", self.optimize_acs.to_string()),
        ]
    }
}

/// Starting point for the unmeasured samples of the EPI grids.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    ZeroFill,
    /// Values on measured lines are ignored in favour of the data.
    Provided {
        pos: KSpaceGrid,
        neg: KSpaceGrid,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub objective: f64,
    /// Inner solve that produced this iterate (`None` for the start).
    pub cg: Option<CgStats>,
    /// `‖N_cᴴN_c − I‖_F` of the C nullspace at this iterate.
    pub nullspace_orthonormality: f64,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub pos: KSpaceGrid,
    pub neg: KSpaceGrid,
    /// Completed ACS grids, present when `optimize_acs` was set.
    pub acs: Option<(KSpaceGrid, KSpaceGrid)>,
    /// Objective at the start and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stats: Vec<IterationStats>,
    /// C nullspace basis at the final iterate (fixed basis for AC-LORAKS).
    pub nullspace: Option<NullspaceBasis<c64>>,
}

/// Passed to an observer after the start point and every outer iteration.
pub struct IterationReport<'a> {
    pub iteration: usize,
    pub objective: f64,
    pub nullspace: &'a NullspaceBasis<c64>,
}

/// Joint objective: `J_{C−p}` of the stacked C matrix (ACS rows scaled by
/// `√η`) plus `λ·J_r` of the four concatenated S matrices. Uses full SVDs.
pub fn joint_objective(
    pos: &KSpaceGrid,
    neg: &KSpaceGrid,
    acs_pos: &KSpaceGrid,
    acs_neg: &KSpaceGrid,
    config: &ReconConfig,
) -> Result<f64> {
    for g in [neg, acs_pos, acs_neg] {
        if !g.same_shape(pos) {
            return Err(Error::Shape("objective grids differ in shape".into()));
        }
    }
    let nb = Neighborhood::new(config.radius)?;
    let c = Lifter::for_grid(LiftKind::C, pos, &nb)?;
    let s = Lifter::for_grid(LiftKind::S, pos, &nb)?;
    config.ranks.validate(c.cols(), 4 * s.cols())?;
    let w = config.eta.sqrt();
    let grids = [pos, neg, acs_pos, acs_neg];
    let weights = [1.0, 1.0, w, w];
    let stacked = stack_c(&c, &grids.map(|g| g.data()), &weights);
    let j_c = penalty_jr(&stacked, c.cols() - config.ranks.nullspace_p)?;
    let j_s = if config.lambda == 0.0 {
        0.0
    } else {
        penalty_jr(&concat_s(&s, &grids.map(|g| g.data())), config.ranks.rank_s)?
    };
    Ok(j_c + config.lambda * j_s)
}

pub fn rac_loraks(dataset: &Dataset, config: &ReconConfig, init: &Init) -> Result<ReconResult> {
    rac_loraks_observed(dataset, config, init, &mut |_| {})
}

/// [`rac_loraks`] with a callback that sees the C nullspace of every
/// iterate.
pub fn rac_loraks_observed(
    dataset: &Dataset,
    config: &ReconConfig,
    init: &Init,
    observer: &mut dyn FnMut(&IterationReport),
) -> Result<ReconResult> {
    dataset.validate()?;
    config.validate()?;
    if !dataset.acs_pos.same_shape(&dataset.epi_pos) {
        return Err(Error::Shape(format!(
            "RAC-LORAKS needs ACS grids shaped like the EPI grids ({:?} vs {:?})",
            dataset.acs_pos.dims(),
            dataset.epi_pos.dims()
        )));
    }
    let nb = Neighborhood::new(config.radius)?;
    let c = Lifter::for_grid(LiftKind::C, &dataset.epi_pos, &nb)?;
    let s = Lifter::for_grid(LiftKind::S, &dataset.epi_pos, &nb)?;
    config.ranks.validate(c.cols(), 4 * s.cols())?;

    let (pos, neg) = epi_blocks(dataset, init)?;
    let acs_mask = dataset.acs_mask();
    let acs_free = if config.optimize_acs {
        free_indices(&acs_mask)
    } else {
        Vec::new()
    };
    let acs_block = |g: &KSpaceGrid| Block {
        data: g.data().to_vec(),
        free: acs_free.clone(),
        c_weight: config.eta,
    };
    let blocks = vec![
        pos,
        neg,
        acs_block(&dataset.acs_pos),
        acs_block(&dataset.acs_neg),
    ];
    let problem = Problem {
        blocks,
        c,
        s,
        lambda: config.lambda,
        rank_s: config.ranks.rank_s,
        nullspace: CNullspace::Adaptive(config.ranks.nullspace_p),
    };
    let mut result = problem.run(config, observer)?;
    if !config.optimize_acs {
        result.acs = None;
    }
    Ok(result)
}

/// AC-LORAKS: the C nullspace is computed once from the (complete) ACS
/// data, and the S penalty covers only the two EPI grids.
pub fn ac_loraks(dataset: &Dataset, config: &ReconConfig, init: &Init) -> Result<ReconResult> {
    dataset.validate()?;
    config.validate()?;
    if !dataset.acs_pattern.is_fully_acquired() {
        return Err(Error::Parameter(
            "AC-LORAKS needs fully sampled ACS data".into(),
        ));
    }
    let (n, lead) = ac_split(dataset, config)?;
    let nb = Neighborhood::new(config.radius)?;
    let c = Lifter::for_grid(LiftKind::C, &dataset.epi_pos, &nb)?;
    let s = Lifter::for_grid(LiftKind::S, &dataset.epi_pos, &nb)?;
    config.ranks.validate(c.cols(), 2 * s.cols())?;
    if n.ambient_dim() != c.cols() {
        return Err(Error::Shape(
            "ACS and EPI data have different channel counts".into(),
        ));
    }
    let (pos, neg) = epi_blocks(dataset, init)?;
    let problem = Problem {
        blocks: vec![pos, neg],
        c,
        s,
        lambda: config.lambda,
        rank_s: config.ranks.rank_s,
        nullspace: CNullspace::Fixed(n, lead),
    };
    problem.run(config, &mut |_| {})
}

/// Nullspace of `[C(acs⁺); C(acs⁻)]` with `p` columns.
pub fn ac_nullspace(dataset: &Dataset, config: &ReconConfig) -> Result<NullspaceBasis<c64>> {
    Ok(ac_split(dataset, config)?.0)
}

fn ac_split(dataset: &Dataset, config: &ReconConfig) -> Result<(NullspaceBasis<c64>, Mat<c64>)> {
    let nb = Neighborhood::new(config.radius)?;
    let c = Lifter::for_grid(LiftKind::C, &dataset.acs_pos, &nb)?;
    let m = stack_c(
        &c,
        &[dataset.acs_pos.data(), dataset.acs_neg.data()],
        &[1.0, 1.0],
    );
    right_split(&m, config.ranks.nullspace_p)
}

/// Singular value curves of the ACS liftings used for rank selection.
#[derive(Debug, Clone, PartialEq)]
pub struct AcsSpectra {
    /// `[C(acs⁺); C(acs⁻)]`, zero-padded to one value per column.
    pub c: Vec<f64>,
    /// `[S(acs⁺) S(acs⁻)]`, zero-padded to one value per column.
    pub s: Vec<f64>,
}

impl AcsSpectra {
    pub fn of(dataset: &Dataset, radius: usize) -> Result<Self> {
        let nb = Neighborhood::new(radius)?;
        let grids = [dataset.acs_pos.data(), dataset.acs_neg.data()];
        let c = Lifter::for_grid(LiftKind::C, &dataset.acs_pos, &nb)?;
        let s = Lifter::for_grid(LiftKind::S, &dataset.acs_pos, &nb)?;
        let pad = |mut sv: Vec<f64>, n: usize| {
            sv.resize(n, 0.0);
            sv
        };
        Ok(Self {
            c: pad(
                singular_values(&stack_c(&c, &grids, &[1.0, 1.0]))?,
                c.cols(),
            ),
            s: pad(singular_values(&concat_s(&s, &grids))?, 2 * s.cols()),
        })
    }

    /// `suggest_rank` applied to both curves: `(p, r)` suggestions.
    pub fn suggest(&self) -> Result<(RankSuggestion, RankSuggestion)> {
        Ok((
            suggest_rank(&self.c, RankSide::C)?,
            suggest_rank(&self.s, RankSide::S)?,
        ))
    }

    /// A plan from the suggestions, clamped into the admissible ranges.
    pub fn plan(&self) -> Result<RankPlan> {
        let (p, r) = self.suggest()?;
        Ok(RankPlan {
            rank_s: r.value.clamp(1, self.s.len() - 1),
            nullspace_p: p.value.clamp(1, self.c.len() - 1),
        })
    }
}

/// Measured data with zeros elsewhere. The single trace entry is the joint
/// objective of the zero-filled EPI and ACS grids.
pub fn zero_fill(dataset: &Dataset, config: &ReconConfig) -> Result<ReconResult> {
    dataset.validate()?;
    config.validate()?;
    let mut objective = f64::NAN;
    let mut nullspace = None;
    if dataset.acs_pos.same_shape(&dataset.epi_pos) {
        let nb = Neighborhood::new(config.radius)?;
        let c = Lifter::for_grid(LiftKind::C, &dataset.epi_pos, &nb)?;
        let s = Lifter::for_grid(LiftKind::S, &dataset.epi_pos, &nb)?;
        config.ranks.validate(c.cols(), 4 * s.cols())?;
        let fixed = |g: &KSpaceGrid, w: f64| Block {
            data: g.data().to_vec(),
            free: Vec::new(),
            c_weight: w,
        };
        let problem = Problem {
            blocks: vec![
                fixed(&dataset.epi_pos, 1.0),
                fixed(&dataset.epi_neg, 1.0),
                fixed(&dataset.acs_pos, config.eta),
                fixed(&dataset.acs_neg, config.eta),
            ],
            c,
            s,
            lambda: config.lambda,
            rank_s: config.ranks.rank_s,
            nullspace: CNullspace::Adaptive(config.ranks.nullspace_p),
        };
        let sur = problem.surrogate()?;
        objective = sur.objective;
        nullspace = Some(sur.nc);
    }
    Ok(ReconResult {
        pos: dataset.epi_pos.clone().with_polarity(Polarity::Positive),
        neg: dataset.epi_neg.clone().with_polarity(Polarity::Negative),
        acs: None,
        objective_trace: vec![objective],
        iterations: 0,
        converged: true,
        stats: Vec::new(),
        nullspace,
    })
}

fn free_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| !m)
        .map(|(i, _)| i)
        .collect()
}

fn epi_blocks(dataset: &Dataset, init: &Init) -> Result<(Block, Block)> {
    let (mask_pos, mask_neg) = dataset.epi_masks();
    let mut pos = Block {
        data: dataset.epi_pos.data().to_vec(),
        free: free_indices(&mask_pos),
        c_weight: 1.0,
    };
    let mut neg = Block {
        data: dataset.epi_neg.data().to_vec(),
        free: free_indices(&mask_neg),
        c_weight: 1.0,
    };
    if let Init::Provided { pos: p0, neg: n0 } = init {
        if !p0.same_shape(&dataset.epi_pos) || !n0.same_shape(&dataset.epi_pos) {
            return Err(Error::Shape(
                "initial grids differ in shape from EPI".into(),
            ));
        }
        for (block, start) in [(&mut pos, p0), (&mut neg, n0)] {
            for &i in &block.free {
                block.data[i] = start.data()[i];
            }
        }
    }
    Ok((pos, neg))
}

fn stack_c(c: &Lifter, grids: &[&[Complex64]], weights: &[f64]) -> Mat<c64> {
    let n = c.rows();
    let mut out = Mat::<c64>::zeros(n * grids.len(), c.cols());
    for (g, (data, &w)) in grids.iter().zip(weights).enumerate() {
        let m = c.lift_c(data);
        for j in 0..c.cols() {
            let src = m.col_as_slice(j);
            let dst = &mut out.col_as_slice_mut(j)[g * n..(g + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s * w;
            }
        }
    }
    out
}

fn concat_s(s: &Lifter, grids: &[&[Complex64]]) -> Mat<f64> {
    let k = s.cols();
    let mut out = Mat::<f64>::zeros(s.rows(), k * grids.len());
    for (g, data) in grids.iter().enumerate() {
        let m = s.lift_s(data);
        for j in 0..k {
            out.col_as_slice_mut(g * k + j)
                .copy_from_slice(m.col_as_slice(j));
        }
    }
    out
}

struct Block {
    data: Vec<Complex64>,
    /// Unmeasured (free) sample indices; empty for fixed blocks.
    free: Vec<usize>,
    /// Weight of this block in the C term (`η` for ACS, 1 otherwise).
    c_weight: f64,
}

enum CNullspace {
    Adaptive(usize),
    /// Nullspace basis and its orthogonal complement.
    Fixed(NullspaceBasis<c64>, Mat<c64>),
}

/// Projector `P` onto the penalised subspace, stored through whichever of
/// the subspace or its complement has fewer columns.
enum Projector<T> {
    /// `P = Q Qᴴ`.
    Keep(Mat<T>),
    /// `P = I − Q Qᴴ`.
    Remove(Mat<T>),
}

impl<T> Projector<T> {
    fn pick(tail: Mat<T>, lead: Mat<T>) -> Self {
        if tail.ncols() <= lead.ncols() {
            Projector::Keep(tail)
        } else {
            Projector::Remove(lead)
        }
    }

    fn basis(&self) -> &Mat<T> {
        match self {
            Projector::Keep(q) | Projector::Remove(q) => q,
        }
    }
}

struct Surrogate {
    nc: NullspaceBasis<c64>,
    c_proj: Projector<c64>,
    s_proj: Option<Projector<f64>>,
    objective: f64,
}

struct Problem {
    blocks: Vec<Block>,
    c: Lifter,
    s: Lifter,
    lambda: f64,
    rank_s: usize,
    nullspace: CNullspace,
}

impl Problem {
    fn c_weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.c_weight.sqrt()).collect()
    }

    fn surrogate(&self) -> Result<Surrogate> {
        let grids: Vec<&[Complex64]> = self.blocks.iter().map(|b| b.data.as_slice()).collect();
        let stacked = stack_c(&self.c, &grids, &self.c_weights());
        let (nc, lead) = match &self.nullspace {
            CNullspace::Adaptive(p) => right_split(&stacked, *p)?,
            CNullspace::Fixed(n, lead) => (n.clone(), lead.clone()),
        };
        let c_proj = Projector::pick(nc.matrix().clone(), lead);
        let c_term = (&stacked * nc.matrix()).squared_norm_l2();
        let (s_term, s_proj) = if self.lambda == 0.0 {
            (0.0, None)
        } else {
            let concat = concat_s(&self.s, &grids);
            let spec = GramSpectrum::of(&concat)?;
            let q = spec.dim() - self.rank_s;
            let tail = spec.trailing(q);
            let term = (&concat * tail.matrix()).squared_norm_l2();
            let proj = Projector::pick(tail.matrix().clone(), spec.leading(self.rank_s));
            (term, Some(proj))
        };
        let objective = c_term + self.lambda * s_term;
        Ok(Surrogate {
            nc,
            c_proj,
            s_proj,
            objective,
        })
    }

    /// Half the gradient of the frozen quadratic, restricted to the free
    /// blocks, evaluated at the given per-block grids (`None` = zero).
    fn half_gradient(&self, sur: &Surrogate, dirs: &[Option<&[Complex64]>]) -> Vec<Vec<Complex64>> {
        let len = self.c.grid_len();
        let mut out: Vec<Vec<Complex64>> = self
            .blocks
            .iter()
            .map(|b| {
                if b.free.is_empty() {
                    Vec::new()
                } else {
                    vec![Complex64::new(0.0, 0.0); len]
                }
            })
            .collect();
        let qc = sur.c_proj.basis();
        for (g, block) in self.blocks.iter().enumerate() {
            let Some(d) = dirs[g] else { continue };
            if block.free.is_empty() || block.c_weight == 0.0 {
                continue;
            }
            let l = self.c.lift_c(d);
            let t = &l * qc;
            let y = match sur.c_proj {
                Projector::Keep(_) => &t * qc.adjoint(),
                Projector::Remove(_) => {
                    let mut y = l;
                    matmul(
                        &mut y,
                        Accum::Add,
                        &t,
                        qc.adjoint(),
                        c64::new(-1.0, 0.0),
                        Par::Seq,
                    );
                    y
                }
            };
            self.c.adjoint_c_into(&y, block.c_weight, &mut out[g]);
        }
        if let Some(proj) = &sur.s_proj {
            let q = proj.basis();
            let k = self.s.cols();
            let lifts: Vec<Option<Mat<f64>>> =
                dirs.iter().map(|d| d.map(|d| self.s.lift_s(d))).collect();
            let mut t = Mat::<f64>::zeros(self.s.rows(), q.ncols());
            for (g, l) in lifts.iter().enumerate() {
                if let Some(l) = l {
                    matmul(&mut t, Accum::Add, l, q.subrows(g * k, k), 1.0, Par::Seq);
                }
            }
            for (g, block) in self.blocks.iter().enumerate() {
                if block.free.is_empty() {
                    continue;
                }
                let qg = q.subrows(g * k, k);
                let y = match (proj, &lifts[g]) {
                    (Projector::Keep(_), _) => &t * qg.transpose(),
                    (Projector::Remove(_), Some(l)) => {
                        let mut y = l.clone();
                        matmul(&mut y, Accum::Add, &t, qg.transpose(), -1.0, Par::Seq);
                        y
                    }
                    (Projector::Remove(_), None) => -(&t * qg.transpose()),
                };
                self.s.adjoint_s_into(&y, self.lambda, &mut out[g]);
            }
        }
        out
    }

    fn gather(&self, full: &[Vec<Complex64>]) -> Vec<Complex64> {
        let mut v = Vec::new();
        for (block, f) in self.blocks.iter().zip(full) {
            v.extend(block.free.iter().map(|&i| f[i]));
        }
        v
    }

    fn scatter(&self, v: &[Complex64]) -> Vec<Option<Vec<Complex64>>> {
        let len = self.c.grid_len();
        let mut at = 0;
        self.blocks
            .iter()
            .map(|block| {
                if block.free.is_empty() {
                    return None;
                }
                let mut g = vec![Complex64::new(0.0, 0.0); len];
                for &i in &block.free {
                    g[i] = v[at];
                    at += 1;
                }
                Some(g)
            })
            .collect()
    }

    /// Lowers the frozen quadratic over the free samples, starting from the
    /// current iterate.
    fn data_step(
        &mut self,
        sur: &Surrogate,
        config: &ReconConfig,
        outer: usize,
    ) -> Result<CgStats> {
        let current: Vec<Option<&[Complex64]>> = self
            .blocks
            .iter()
            .map(|b| Some(b.data.as_slice()))
            .collect();
        let b: Vec<Complex64> = self
            .gather(&self.half_gradient(sur, &current))
            .into_iter()
            .map(|z| -z)
            .collect();
        let apply = |z: &[Complex64]| {
            let dirs = self.scatter(z);
            let refs: Vec<Option<&[Complex64]>> = dirs.iter().map(|d| d.as_deref()).collect();
            self.gather(&self.half_gradient(sur, &refs))
        };
        let (delta, stats) =
            cg::solve(apply, &b, config.cg_max, config.cg_tol).map_err(|e| Error::InnerSolver {
                outer,
                inner: e.iteration,
                curvature: e.curvature,
                residual: e.residual,
            })?;
        let mut at = 0;
        for block in &mut self.blocks {
            for &i in &block.free {
                block.data[i] += delta[at];
                at += 1;
            }
        }
        Ok(stats)
    }

    fn run(
        mut self,
        config: &ReconConfig,
        observer: &mut dyn FnMut(&IterationReport),
    ) -> Result<ReconResult> {
        let check = |f: f64, iteration: usize| {
            if f.is_finite() {
                Ok(())
            } else {
                Err(Error::Divergence {
                    iteration,
                    objective: f,
                })
            }
        };
        let mut sur = self.surrogate()?;
        check(sur.objective, 0)?;
        let mut trace = vec![sur.objective];
        let mut stats = vec![IterationStats {
            objective: sur.objective,
            cg: None,
            nullspace_orthonormality: sur.nc.orthonormality_error(),
        }];
        observer(&IterationReport {
            iteration: 0,
            objective: sur.objective,
            nullspace: &sur.nc,
        });
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_outer {
            iterations += 1;
            let cg = self.data_step(&sur, config, iterations)?;
            let prev = sur.objective;
            sur = self.surrogate()?;
            check(sur.objective, iterations)?;
            trace.push(sur.objective);
            stats.push(IterationStats {
                objective: sur.objective,
                cg: Some(cg),
                nullspace_orthonormality: sur.nc.orthonormality_error(),
            });
            observer(&IterationReport {
                iteration: iterations,
                objective: sur.objective,
                nullspace: &sur.nc,
            });
            if (prev - sur.objective).abs() <= config.tol * prev.abs() || sur.objective == 0.0 {
                converged = true;
                break;
            }
        }
        let (n_ch, ny, nx) = (
            self.c.provenance().n_ch,
            self.c.provenance().ny,
            self.c.provenance().nx,
        );
        let mut grids = self
            .blocks
            .into_iter()
            .map(|b| KSpaceGrid::from_data(n_ch, ny, nx, Polarity::None, b.data));
        let pos = grids.next().unwrap()?.with_polarity(Polarity::Positive);
        let neg = grids.next().unwrap()?.with_polarity(Polarity::Negative);
        let acs = match (grids.next(), grids.next()) {
            (Some(a), Some(b)) => Some((
                a?.with_polarity(Polarity::Positive),
                b?.with_polarity(Polarity::Negative),
            )),
            _ => None,
        };
        Ok(ReconResult {
            pos,
            neg,
            acs,
            objective_trace: trace,
            iterations,
            converged,
            stats,
            nullspace: Some(sur.nc),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{split_interleaved, PartialFourier, SamplingPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, n_ch: usize, n: usize) -> KSpaceGrid {
        let data = (0..n_ch * n * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        KSpaceGrid::from_data(n_ch, n, n, Polarity::None, data).unwrap()
    }

    // Random data: enough to exercise plumbing, not reconstruction quality.
    fn dataset(seed: u64, n_ch: usize, n: usize, accel: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = SamplingPattern::epi(n, accel, PartialFourier::FULL, 0).unwrap();
        let raw = random_grid(&mut rng, n_ch, n);
        let (epi_pos, epi_neg) = split_interleaved(&raw, &pattern).unwrap();
        let acs_pattern = SamplingPattern::fully_sampled(n);
        Dataset {
            epi_pos,
            epi_neg,
            pattern,
            acs_pos: random_grid(&mut rng, n_ch, n).with_polarity(Polarity::Positive),
            acs_neg: random_grid(&mut rng, n_ch, n).with_polarity(Polarity::Negative),
            acs_pattern,
            gold: None,
        }
    }

    fn config(n_ch: usize) -> ReconConfig {
        let mut cfg = ReconConfig::new(RankPlan {
            rank_s: 4 * n_ch,
            nullspace_p: 2 * n_ch,
        });
        cfg.radius = 1;
        cfg.lambda = 0.5;
        cfg.max_outer = 6;
        cfg.cg_max = 30;
        cfg
    }

    #[test]
    fn trace_is_monotone_and_data_untouched() {
        let ds = dataset(1, 2, 10, 2);
        let cfg = config(2);
        let res = rac_loraks(&ds, &cfg, &Init::ZeroFill).unwrap();
        assert_eq!(res.objective_trace.len(), res.iterations + 1);
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{w:?}");
        }
        let (mp, mn) = ds.epi_masks();
        for (i, m) in mp.iter().enumerate() {
            if *m {
                assert_eq!(
                    res.pos.data()[i].re.to_bits(),
                    ds.epi_pos.data()[i].re.to_bits()
                );
                assert_eq!(
                    res.pos.data()[i].im.to_bits(),
                    ds.epi_pos.data()[i].im.to_bits()
                );
            }
        }
        for (i, m) in mn.iter().enumerate() {
            if *m {
                assert_eq!(res.neg.data()[i], ds.epi_neg.data()[i]);
            }
        }
        for s in &res.stats {
            assert!(s.nullspace_orthonormality < 1e-10);
        }
    }

    #[test]
    fn trace_matches_svd_objective() {
        let ds = dataset(2, 2, 10, 2);
        let cfg = config(2);
        let res = rac_loraks(&ds, &cfg, &Init::ZeroFill).unwrap();
        let f = joint_objective(&res.pos, &res.neg, &ds.acs_pos, &ds.acs_neg, &cfg).unwrap();
        let last = *res.objective_trace.last().unwrap();
        assert!((f - last).abs() <= 1e-9 * f, "{f} vs {last}");
    }

    #[test]
    fn full_sampling_is_identity() {
        let mut ds = dataset(3, 2, 10, 1);
        ds.epi_pos = ds.acs_pos.scaled(Complex64::new(0.0, 2.0));
        ds.epi_neg = ds.acs_neg.scaled(Complex64::new(-1.0, 0.5));
        ds.pattern = SamplingPattern::both_polarities(10);
        let res = rac_loraks(&ds, &config(2), &Init::ZeroFill).unwrap();
        assert_eq!(res.pos, ds.epi_pos);
        assert_eq!(res.neg, ds.epi_neg);
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        let res = ac_loraks(&ds, &config(2), &Init::ZeroFill).unwrap();
        assert_eq!(res.pos, ds.epi_pos);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn zero_fill_starts_both_solvers() {
        let ds = dataset(4, 2, 10, 2);
        let cfg = config(2);
        let zf = zero_fill(&ds, &cfg).unwrap();
        assert_eq!(zf.objective_trace.len(), 1);
        assert_eq!(zf.pos.data(), ds.epi_pos.data());
        let rac = rac_loraks(&ds, &cfg, &Init::ZeroFill).unwrap();
        assert_eq!(rac.objective_trace[0], zf.objective_trace[0]);
    }

    #[test]
    fn ac_trace_is_monotone() {
        let ds = dataset(5, 2, 10, 2);
        let res = ac_loraks(&ds, &config(2), &Init::ZeroFill).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{w:?}");
        }
    }

    #[test]
    fn optimize_acs_fills_acs_and_keeps_its_data() {
        let mut ds = dataset(6, 2, 10, 2);
        ds.acs_pattern = SamplingPattern::central_block(10, 4).unwrap();
        let rows = ds.acs_pattern.acquired_rows();
        ds.acs_pos = ds.acs_pos.masked_rows(&rows);
        ds.acs_neg = ds.acs_neg.masked_rows(&rows);
        let mut cfg = config(2);
        cfg.optimize_acs = true;
        let res = rac_loraks(&ds, &cfg, &Init::ZeroFill).unwrap();
        let (ap, an) = res.acs.unwrap();
        let mask = ds.acs_mask();
        for (i, m) in mask.iter().enumerate() {
            if *m {
                assert_eq!(ap.data()[i], ds.acs_pos.data()[i]);
                assert_eq!(an.data()[i], ds.acs_neg.data()[i]);
            }
        }
        assert!(ap.energy() > ds.acs_pos.energy());
        assert!(matches!(
            ac_loraks(&ds, &cfg, &Init::ZeroFill),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn joint_objective_edge_cases() {
        let ds = dataset(7, 2, 10, 2);
        let mut cfg = config(2);
        let z = KSpaceGrid::zeros(2, 10, 10, Polarity::None);
        assert_eq!(joint_objective(&z, &z, &z, &z, &cfg).unwrap(), 0.0);
        cfg.lambda = 0.0;
        let nb = Neighborhood::new(cfg.radius).unwrap();
        let c = Lifter::for_grid(LiftKind::C, &ds.epi_pos, &nb).unwrap();
        let w = cfg.eta.sqrt();
        let grids = [&ds.epi_pos, &ds.epi_neg, &ds.acs_pos, &ds.acs_neg].map(|g| g.data());
        let stacked = stack_c(&c, &grids, &[1.0, 1.0, w, w]);
        let expect = penalty_jr(&stacked, c.cols() - cfg.ranks.nullspace_p).unwrap();
        let got =
            joint_objective(&ds.epi_pos, &ds.epi_neg, &ds.acs_pos, &ds.acs_neg, &cfg).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
        cfg.eta = 0.0;
        let only_epi = penalty_jr(
            &stack_c(&c, &grids[..2], &[1.0, 1.0]),
            c.cols() - cfg.ranks.nullspace_p,
        )
        .unwrap();
        let got =
            joint_objective(&ds.epi_pos, &ds.epi_neg, &ds.acs_pos, &ds.acs_neg, &cfg).unwrap();
        assert!((got - only_epi).abs() <= 1e-12 * only_epi);
        let small = KSpaceGrid::zeros(2, 8, 8, Polarity::None);
        assert!(matches!(
            joint_objective(&ds.epi_pos, &small, &z, &z, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(2);
        assert!(cfg.validate().is_ok());
        cfg.lambda = -1.0;
        assert!(cfg.validate().is_err());
        cfg = config(2);
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        let ds = dataset(8, 2, 10, 2);
        cfg = config(2);
        cfg.ranks.nullspace_p = 100;
        assert!(matches!(
            rac_loraks(&ds, &cfg, &Init::ZeroFill),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn provided_init_respects_data() {
        let ds = dataset(9, 2, 10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p0 = random_grid(&mut rng, 2, 10);
        let n0 = random_grid(&mut rng, 2, 10);
        let mut cfg = config(2);
        cfg.max_outer = 1;
        let res = rac_loraks(&ds, &cfg, &Init::Provided { pos: p0, neg: n0 }).unwrap();
        let (mp, _) = ds.epi_masks();
        for (i, m) in mp.iter().enumerate() {
            if *m {
                assert_eq!(res.pos.data()[i], ds.epi_pos.data()[i]);
            }
        }
    }
}
