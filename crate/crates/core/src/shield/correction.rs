use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::shield::depth::{compute_direction, preprocess_depth, DepthVector};
use crate::shield::predictor::CollisionModel;
use crate::sim::NormalizedAction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShieldMode {
    Gradient,
    FixedInterval,
}

impl fmt::Display for ShieldMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShieldMode::Gradient => "gradient",
            ShieldMode::FixedInterval => "fixed_interval",
        })
    }
}

impl FromStr for ShieldMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(ShieldMode::Gradient),
            "fixed_interval" | "fixed" => Ok(ShieldMode::FixedInterval),
            _ => Err(Error::invalid("shield_mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShieldConfig {
    pub beta: f64,
    pub d_c: f64,
    pub delta_lin: f64,
    pub delta_ang: f64,
    pub max_corrections: usize,
    pub eta: f64,
    pub mode: ShieldMode,
    pub max_depth: f64,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        ShieldConfig {
            beta: 0.3,
            d_c: 0.5,
            delta_lin: 0.3,
            delta_ang: 0.3,
            max_corrections: 5,
            eta: 0.1,
            mode: ShieldMode::FixedInterval,
            max_depth: 3.0,
        }
    }
}

impl ShieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        if !(self.d_c > 0.0 && self.d_c < 1.0) {
            return Err(Error::invalid("d_c", "must lie in (0, 1)"));
        }
        if self.max_corrections == 0 {
            return Err(Error::invalid("max_corrections", "must be at least 1"));
        }
        if self.delta_lin < 0.0 || self.delta_ang < 0.0 || self.eta < 0.0 {
            return Err(Error::invalid("delta_lin", "step sizes must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correction {
    pub action: NormalizedAction,
    pub corrected: bool,
    pub iterations: usize,
    pub fallback: bool,
    /// `Q_c` of the returned action.
    pub q: f64,
    /// `Q_c` of the proposed action.
    pub q_initial: f64,
}

impl Correction {
    /// The returned action is predicted safe, or the caller was told it
    /// is not.
    pub fn is_accounted(&self, cfg: &ShieldConfig) -> bool {
        self.q < cfg.d_c || self.fallback
    }
}

/// One projected step `clamp(a - eta grad)` into the action box.
pub fn gradient_step(a: [f64; 2], grad: [f64; 2], eta: f64) -> [f64; 2] {
    [
        (a[0] - eta * grad[0]).clamp(-1.0, 1.0),
        (a[1] - eta * grad[1]).clamp(-1.0, 1.0),
    ]
}

/// Projected descent on `[Q_c - d_c]^+`: `a <- clamp(a - eta grad Q_c)` until
/// `Q_c < d_c` or the iteration cap, then the same stop-and-rotate fallback
/// as the fixed-interval rule.
pub fn correct_gradient<M: CollisionModel + ?Sized>(
    a: NormalizedAction,
    sd: &DepthVector,
    qc: &M,
    cfg: &ShieldConfig,
) -> Correction {
    let mut act = a.to_array();
    let (mut q, mut g) = qc.probability_and_grad(sd, act);
    let q_initial = q;
    let mut k = 0;
    while q >= cfg.d_c && k < cfg.max_corrections {
        act = gradient_step(act, g, cfg.eta);
        k += 1;
        (q, g) = qc.probability_and_grad(sd, act);
    }
    let fallback = q >= cfg.d_c;
    if fallback {
        act = [-1.0, -compute_direction(sd)];
        q = qc.probability(sd, act);
    }
    Correction {
        action: NormalizedAction::new(act[0], act[1]),
        corrected: k > 0,
        iterations: k,
        fallback,
        q,
        q_initial,
    }
}

/// Fixed-interval correction `a <- (lin - dl, ang - D da)` with a
/// stop-and-rotate fallback when five steps do not suffice.
pub fn correct_fixed<M: CollisionModel + ?Sized>(
    a: NormalizedAction,
    sd: &DepthVector,
    qc: &M,
    cfg: &ShieldConfig,
) -> Correction {
    let d = compute_direction(sd);
    let mut act = a.to_array();
    let mut q = qc.probability(sd, act);
    let q_initial = q;
    let mut k = 0;
    while q >= cfg.d_c && k < cfg.max_corrections {
        act = [
            (act[0] - cfg.delta_lin).clamp(-1.0, 1.0),
            (act[1] - d * cfg.delta_ang).clamp(-1.0, 1.0),
        ];
        k += 1;
        q = qc.probability(sd, act);
    }
    let fallback = q >= cfg.d_c;
    if fallback {
        // -1 is zero forward speed; rotate toward the clearer side
        act = [-1.0, -d];
        q = qc.probability(sd, act);
    }
    Correction {
        action: NormalizedAction::new(act[0], act[1]),
        corrected: k > 0,
        iterations: k,
        fallback,
        q,
        q_initial,
    }
}

/// Configuration plus dispatch on the correction mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyShield {
    pub config: ShieldConfig,
}

impl SafetyShield {
    pub fn new(config: ShieldConfig) -> Result<Self> {
        config.validate()?;
        Ok(SafetyShield { config })
    }

    pub fn correct<M: CollisionModel + ?Sized>(&self, a: NormalizedAction, sd: &DepthVector, qc: &M) -> Correction {
        match self.config.mode {
            ShieldMode::Gradient => correct_gradient(a, sd, qc, &self.config),
            ShieldMode::FixedInterval => correct_fixed(a, sd, qc, &self.config),
        }
    }

    /// Same as [`SafetyShield::correct`] starting from raw depth rays.
    pub fn correct_rays<M: CollisionModel + ?Sized>(
        &self,
        a: NormalizedAction,
        rays: &[f64],
        qc: &M,
    ) -> Result<(Correction, DepthVector)> {
        let sd = preprocess_depth(rays, self.config.max_depth)?;
        Ok((self.correct(a, &sd, qc), sd))
    }
}
