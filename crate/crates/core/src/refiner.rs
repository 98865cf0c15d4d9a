//! Per-pixel inverse-depth refinement with Adam.
//!
//! The variable is inverse depth `rho = 1 / Z`, clamped to configured bounds after every
//! step. The objective is
//!
//! ```text
//! photometric * L_photo + smoothness * L_smooth(rho) + hp * sum L_HP + vp * sum L_VP
//! ```
//!
//! A candidate step is accepted only if it does not increase the objective. Otherwise
//! the step size is halved, persistently, and the step retried.

use std::fmt::Write as _;
use std::path::Path;

use crate::camera::CameraIntrinsics;
use crate::data_io::KeyValues;
use crate::error::{Error, Result};
use crate::gravity::GravityVector;
use crate::grid::{DepthMap, DisparityMap, Image, InverseDepthMap};
use crate::regularizers::{loss_smoothness, loss_smoothness_grad, DEFAULT_EDGE_WEIGHT};
use crate::semantics::{CategorySet, SemanticMask};
use crate::sigl::{sigl_gradient, sigl_total, RegionMode, SiglConfig, VerticalSolver};
use crate::warp::{
    loss_view_synthesis_mono, loss_view_synthesis_mono_grad, loss_view_synthesis_stereo,
    loss_view_synthesis_stereo_grad, FrameSequence,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementConfig {
    pub photometric_weight: f64,
    pub smoothness_weight: f64,
    pub hp_weight: f64,
    pub vp_weight: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction.
    pub tolerance: f64,
    pub min_inverse_depth: f64,
    pub max_inverse_depth: f64,
    pub categories: CategorySet,
    pub vertical: VerticalSolver,
    pub region_mode: RegionMode,
    pub min_region_pixels: usize,
    pub edge_weight: f64,
    pub max_backtracks: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            photometric_weight: 1.0,
            smoothness_weight: 0.1,
            hp_weight: 0.5,
            vp_weight: 0.5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 200,
            tolerance: 1e-9,
            min_inverse_depth: 1e-3,
            max_inverse_depth: 10.0,
            categories: CategorySet::default(),
            vertical: VerticalSolver::default(),
            region_mode: RegionMode::default(),
            min_region_pixels: 16,
            edge_weight: DEFAULT_EDGE_WEIGHT,
            max_backtracks: 5,
        }
    }
}

const CONFIG_KEYS: [&str; 18] = [
    "photometric_weight",
    "smoothness_weight",
    "hp_weight",
    "vp_weight",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "max_iterations",
    "tolerance",
    "min_inverse_depth",
    "max_inverse_depth",
    "categories",
    "directions",
    "region_mode",
    "min_region_pixels",
    "edge_weight",
    "max_backtracks",
];

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("photometric_weight", self.photometric_weight),
            ("smoothness_weight", self.smoothness_weight),
            ("hp_weight", self.hp_weight),
            ("vp_weight", self.vp_weight),
            ("edge_weight", self.edge_weight),
            ("tolerance", self.tolerance),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.min_inverse_depth > 0.0
            && self.max_inverse_depth > self.min_inverse_depth
            && self.max_inverse_depth.is_finite())
        {
            return Err(Error::Config(format!(
                "inverse-depth bounds must satisfy 0 < min < max, got [{}, {}]",
                self.min_inverse_depth, self.max_inverse_depth
            )));
        }
        if self.vertical == VerticalSolver::Sampled(0) {
            return Err(Error::Config("directions must be >= 1".into()));
        }
        Ok(())
    }

    pub fn uses_sigl(&self) -> bool {
        self.hp_weight > 0.0 || self.vp_weight > 0.0
    }

    pub fn sigl(&self) -> SiglConfig {
        SiglConfig {
            hp_weight: self.hp_weight,
            vp_weight: self.vp_weight,
            categories: self.categories,
            vertical: self.vertical,
            region_mode: self.region_mode,
            min_region_pixels: self.min_region_pixels,
        }
    }

    /// Overrides defaults with the keys present in `kv`; unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Error::parse(
                kv.source_name(),
                kv.line(k),
                format!("unknown config key '{k}'"),
            ));
        }
        let mut c = Self::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.parse_opt(stringify!($field))? { c.$field = v; })*
            };
        }
        set!(
            photometric_weight,
            smoothness_weight,
            hp_weight,
            vp_weight,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            max_iterations,
            tolerance,
            min_inverse_depth,
            max_inverse_depth,
            categories,
            min_region_pixels,
            edge_weight,
            max_backtracks
        );
        if let Some(v) = kv.get("directions") {
            c.vertical = parse_vertical(v).map_err(|m| Error::parse(kv.source_name(), kv.line("directions"), m))?;
        }
        if let Some(v) = kv.get("region_mode") {
            c.region_mode = match v {
                "components" => RegionMode::Components,
                "per_category" => RegionMode::PerCategory,
                other => {
                    return Err(Error::parse(
                        kv.source_name(),
                        kv.line("region_mode"),
                        format!("region_mode must be 'components' or 'per_category', got '{other}'"),
                    ))
                }
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::from_file(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let directions = match self.vertical {
            VerticalSolver::Exact => "exact".to_string(),
            VerticalSolver::Sampled(k) => k.to_string(),
        };
        let region_mode = match self.region_mode {
            RegionMode::Components => "components",
            RegionMode::PerCategory => "per_category",
        };
        let _ = write!(
            s,
            "photometric_weight = {}\nsmoothness_weight = {}\nhp_weight = {}\nvp_weight = {}\n\
             learning_rate = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\nmax_iterations = {}\n\
             tolerance = {}\nmin_inverse_depth = {}\nmax_inverse_depth = {}\ncategories = {}\n\
             directions = {}\nregion_mode = {}\nmin_region_pixels = {}\nedge_weight = {}\n\
             max_backtracks = {}\n",
            self.photometric_weight,
            self.smoothness_weight,
            self.hp_weight,
            self.vp_weight,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.max_iterations,
            self.tolerance,
            self.min_inverse_depth,
            self.max_inverse_depth,
            self.categories,
            directions,
            region_mode,
            self.min_region_pixels,
            self.edge_weight,
            self.max_backtracks
        );
        s
    }
}

/// `exact` or a positive direction count.
pub fn parse_vertical(v: &str) -> std::result::Result<VerticalSolver, String> {
    if v.eq_ignore_ascii_case("exact") {
        return Ok(VerticalSolver::Exact);
    }
    match v.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(VerticalSolver::Sampled(k)),
        _ => Err(format!("directions must be 'exact' or a positive integer, got '{v}'")),
    }
}

/// Source of the photometric term.
#[derive(Clone, Copy, Debug)]
pub enum Supervision<'a> {
    /// Rectified pair; disparity is `fx * baseline * rho`.
    Stereo {
        left: &'a Image,
        right: &'a Image,
        baseline: f64,
    },
    Monocular(&'a FrameSequence),
    /// No images: only the geometric terms are available.
    None,
}

impl Supervision<'_> {
    fn reference(&self) -> Option<&Image> {
        match self {
            Supervision::Stereo { left, .. } => Some(left),
            Supervision::Monocular(seq) => Some(seq.reference()),
            Supervision::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RefineInputs<'a> {
    pub supervision: Supervision<'a>,
    pub intrinsics: &'a CameraIntrinsics,
    pub gravity: Option<&'a GravityVector>,
    pub mask: Option<&'a SemanticMask>,
}

/// Weighted value of each objective term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub photometric: f64,
    pub smoothness: f64,
    pub hp: f64,
    pub vp: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.photometric + self.smoothness + self.hp + self.vp
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub terms: LossTerms,
    pub total: f64,
    /// Step size used for the accepted step.
    pub learning_rate: f64,
    pub backtracks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Every weight is zero.
    NoObjective,
    MaxIterations,
    Converged,
    /// No step size within the backtracking budget lowered the objective.
    LineSearchStalled,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::NoObjective => "no_objective",
            Termination::MaxIterations => "max_iterations",
            Termination::Converged => "converged",
            Termination::LineSearchStalled => "line_search_stalled",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementTrace {
    pub initial: LossTerms,
    /// One record per accepted step.
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

impl RefinementTrace {
    pub const CSV_HEADER: &'static str = "iteration,total,photometric,smoothness,hp,vp,learning_rate,backtracks";

    pub fn final_terms(&self) -> LossTerms {
        self.iterations.last().map_or(self.initial, |r| r.terms)
    }

    /// Iteration 0 holds the initial losses.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let t = &self.initial;
        let _ = writeln!(
            s,
            "0,{},{},{},{},{},,0",
            t.total(),
            t.photometric,
            t.smoothness,
            t.hp,
            t.vp
        );
        for r in &self.iterations {
            let t = &r.terms;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.iteration, r.total, t.photometric, t.smoothness, t.hp, t.vp, r.learning_rate, r.backtracks
            );
        }
        s
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Folds `grad` into the moments and returns the bias-corrected direction
    /// `m_hat / (sqrt(v_hat) + eps)`.
    pub fn advance(&mut self, grad: &[f64], beta1: f64, beta2: f64, epsilon: f64) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries, optimizer state {}",
                grad.len(),
                self.m.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { term: "total".into() });
        }
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        Ok(grad
            .iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                (*m / c1) / ((*v / c2).sqrt() + epsilon)
            })
            .collect())
    }
}

/// One Adam update `-lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(grad: &[f64], state: &mut AdamState, cfg: &RefinementConfig) -> Result<Vec<f64>> {
    let dir = state.advance(grad, cfg.beta1, cfg.beta2, cfg.epsilon)?;
    Ok(dir.into_iter().map(|d| -cfg.learning_rate * d).collect())
}

fn check_term(term: &str, grad: &[f64]) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { term: term.into() });
    }
    Ok(())
}

struct Objective<'a> {
    inputs: &'a RefineInputs<'a>,
    cfg: &'a RefinementConfig,
    sigl: SiglConfig,
    width: usize,
    height: usize,
}

impl Objective<'_> {
    fn evaluate(&self, rho: &[f64], mut grad: Option<&mut Vec<f64>>) -> Result<LossTerms> {
        let cfg = self.cfg;
        let (w, h) = (self.width, self.height);
        let mut terms = LossTerms::default();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let needs_depth = cfg.uses_sigl()
            || (cfg.photometric_weight > 0.0 && matches!(self.inputs.supervision, Supervision::Monocular(_)));
        let depth = if needs_depth {
            Some(DepthMap::from_vec(w, h, rho.iter().map(|r| 1.0 / r).collect())?)
        } else {
            None
        };
        let inv_sq = |i: usize| -1.0 / (rho[i] * rho[i]);

        if cfg.photometric_weight > 0.0 {
            let wt = cfg.photometric_weight;
            match self.inputs.supervision {
                Supervision::Stereo { left, right, baseline } => {
                    let fb = self.inputs.intrinsics.fx() * baseline;
                    let disp = DisparityMap::from_vec(w, h, rho.iter().map(|r| fb * r).collect())?;
                    if let Some(g) = grad.as_deref_mut() {
                        let (l, gd) = loss_view_synthesis_stereo_grad(left, right, &disp)?;
                        check_term("photometric", &gd)?;
                        terms.photometric = wt * l.value;
                        for (gi, d) in g.iter_mut().zip(&gd) {
                            *gi += wt * fb * d;
                        }
                    } else {
                        terms.photometric = wt * loss_view_synthesis_stereo(left, right, &disp)?.value;
                    }
                }
                Supervision::Monocular(seq) => {
                    let depth = depth.as_ref().expect("built above");
                    let intr = self.inputs.intrinsics;
                    if let Some(g) = grad.as_deref_mut() {
                        let (l, gz) = loss_view_synthesis_mono_grad(seq, depth, intr)?;
                        check_term("photometric", &gz)?;
                        terms.photometric = wt * l.value;
                        for (i, gi) in g.iter_mut().enumerate() {
                            *gi += wt * gz[i] * inv_sq(i);
                        }
                    } else {
                        terms.photometric = wt * loss_view_synthesis_mono(seq, depth, intr)?.value;
                    }
                }
                Supervision::None => unreachable!("checked in refine"),
            }
        }

        if cfg.smoothness_weight > 0.0 {
            let img = self.inputs.supervision.reference().expect("checked in refine");
            let rho_map = InverseDepthMap::from_vec(w, h, rho.to_vec())?;
            let wt = cfg.smoothness_weight;
            if let Some(g) = grad.as_deref_mut() {
                let (l, gs) = loss_smoothness_grad(&rho_map, img, cfg.edge_weight)?;
                check_term("smoothness", &gs)?;
                terms.smoothness = wt * l;
                for (gi, d) in g.iter_mut().zip(&gs) {
                    *gi += wt * d;
                }
            } else {
                terms.smoothness = wt * loss_smoothness(&rho_map, img, cfg.edge_weight)?;
            }
        }

        if cfg.uses_sigl() {
            let depth = depth.as_ref().expect("built above");
            let gravity = self.inputs.gravity.expect("checked in refine");
            let mask = self.inputs.mask.expect("checked in refine");
            let intr = self.inputs.intrinsics;
            let report = if let Some(g) = grad {
                let (report, gz) = sigl_gradient(depth, intr, gravity, mask, &self.sigl)?;
                check_term("geometric", &gz)?;
                for (i, gi) in g.iter_mut().enumerate() {
                    if gz[i] != 0.0 {
                        *gi += gz[i] * inv_sq(i);
                    }
                }
                report
            } else {
                sigl_total(depth, intr, gravity, mask, &self.sigl)?
            };
            terms.hp = cfg.hp_weight * report.hp_total;
            terms.vp = cfg.vp_weight * report.vp_total;
        }
        if !terms.total().is_finite() {
            return Err(Error::NonFinite {
                term: "objective".into(),
            });
        }
        Ok(terms)
    }
}

/// Refines `init` against the configured objective.
pub fn refine(
    init: &InverseDepthMap,
    inputs: &RefineInputs<'_>,
    cfg: &RefinementConfig,
) -> Result<(InverseDepthMap, RefinementTrace)> {
    cfg.validate()?;
    let (w, h) = (init.width(), init.height());
    if !inputs.intrinsics.matches(&DepthMap::filled(w, h, 1.0)?) {
        return Err(Error::DimensionMismatch(format!(
            "inverse depth {w}x{h} vs intrinsics {}x{}",
            inputs.intrinsics.width(),
            inputs.intrinsics.height()
        )));
    }
    if let Some(bad) = init
        .data()
        .iter()
        .find(|r| !(**r >= cfg.min_inverse_depth && **r <= cfg.max_inverse_depth))
    {
        return Err(Error::invalid(format!(
            "initial inverse depth {bad} outside [{}, {}]",
            cfg.min_inverse_depth, cfg.max_inverse_depth
        )));
    }
    if cfg.uses_sigl() {
        if inputs.gravity.is_none() {
            return Err(Error::Config(
                "geometric loss weights are non-zero but no gravity was given".into(),
            ));
        }
        match inputs.mask {
            None => {
                return Err(Error::Config(
                    "geometric loss weights are non-zero but no semantic mask was given".into(),
                ))
            }
            Some(m) if m.width() != w || m.height() != h => {
                return Err(Error::DimensionMismatch(format!(
                    "mask {}x{} vs inverse depth {w}x{h}",
                    m.width(),
                    m.height()
                )))
            }
            _ => {}
        }
    }
    if (cfg.photometric_weight > 0.0 || cfg.smoothness_weight > 0.0) && matches!(inputs.supervision, Supervision::None)
    {
        return Err(Error::Config("photometric and smoothness terms need images".into()));
    }
    if let Supervision::Stereo { baseline, .. } = inputs.supervision {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::Config(format!("baseline must be positive, got {baseline}")));
        }
    }

    let objective = Objective {
        inputs,
        cfg,
        sigl: cfg.sigl(),
        width: w,
        height: h,
    };
    let mut rho = init.data().to_vec();
    let mut grad = vec![0.0; rho.len()];
    let active = cfg.photometric_weight > 0.0 || cfg.smoothness_weight > 0.0 || cfg.uses_sigl();
    if !active {
        return Ok((
            init.clone(),
            RefinementTrace {
                initial: LossTerms::default(),
                iterations: Vec::new(),
                termination: Termination::NoObjective,
            },
        ));
    }

    let initial = objective.evaluate(&rho, None)?;
    let mut current = initial;
    let mut state = AdamState::new(rho.len());
    let mut lr = cfg.learning_rate;
    let mut iterations = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut candidate = vec![0.0; rho.len()];

    for iteration in 1..=cfg.max_iterations {
        objective.evaluate(&rho, Some(&mut grad))?;
        let dir = state.advance(&grad, cfg.beta1, cfg.beta2, cfg.epsilon)?;
        let mut accepted = None;
        for attempt in 0..=cfg.max_backtracks {
            for ((c, r), d) in candidate.iter_mut().zip(&rho).zip(&dir) {
                *c = (r - lr * d).clamp(cfg.min_inverse_depth, cfg.max_inverse_depth);
            }
            let terms = objective.evaluate(&candidate, None)?;
            if terms.total() <= current.total() {
                accepted = Some((terms, attempt));
                break;
            }
            if attempt < cfg.max_backtracks {
                lr *= 0.5;
            }
        }
        let Some((terms, backtracks)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        std::mem::swap(&mut rho, &mut candidate);
        let previous = current.total();
        current = terms;
        iterations.push(IterationRecord {
            iteration,
            terms,
            total: terms.total(),
            learning_rate: lr,
            backtracks,
        });
        if previous - current.total() <= cfg.tolerance * previous.abs() {
            termination = Termination::Converged;
            break;
        }
    }
    Ok((
        InverseDepthMap::from_vec(w, h, rho)?,
        RefinementTrace {
            initial,
            iterations,
            termination,
        },
    ))
}
