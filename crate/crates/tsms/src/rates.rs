//! Symbolic convergence-rate calculus.
//!
//! A [`Rate`] is the descriptor `c * n^(-alpha) * (log n)^(beta)` with exact
//! rational exponents. The module encodes the second-stage rate table with
//! its two phase transitions at `d = p + 2` and `d = 3p`, the matching
//! bandwidth rules, the first-stage sup-norm rate of the kernel regression,
//! and the rate combiner for the multi-index bound.

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Symbolic rate `c * n^(-alpha) * (log n)^(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    /// Exponent of `n^(-alpha)`.
    pub alpha: Rational64,
    /// Exponent of `(log n)^(beta)`.
    pub beta: Rational64,
    /// Leading constant; rate statements hold up to constants, so 1 by
    /// default.
    pub constant: f64,
}

impl Rate {
    pub fn new(alpha: Rational64, beta: Rational64) -> Self {
        Self {
            alpha,
            beta,
            constant: 1.0,
        }
    }

    pub fn from_ints(alpha_num: i64, alpha_den: i64, beta_num: i64, beta_den: i64) -> Self {
        Self::new(
            Rational64::new(alpha_num, alpha_den),
            Rational64::new(beta_num, beta_den),
        )
    }

    /// `true` when `self` shrinks strictly faster than `other`, i.e. is
    /// smaller asymptotically: `alpha` larger, or equal `alpha` and `beta`
    /// smaller.
    pub fn dominates(&self, other: &Rate) -> bool {
        self.alpha > other.alpha || (self.alpha == other.alpha && self.beta < other.beta)
    }

    /// `true` when the rate tends to zero.
    pub fn vanishes(&self) -> bool {
        self.alpha > Rational64::from_integer(0)
            || (self.alpha == Rational64::from_integer(0) && self.beta < Rational64::from_integer(0))
    }

    /// Numeric value `c * n^(-alpha) * (log n)^(beta)` at a given sample
    /// size.
    pub fn eval(&self, n: usize) -> f64 {
        let nf = n as f64;
        let a = *self.alpha.numer() as f64 / *self.alpha.denom() as f64;
        let b = *self.beta.numer() as f64 / *self.beta.denom() as f64;
        self.constant * nf.powf(-a) * nf.ln().powf(b)
    }

    /// Display form such as `n^(-2/5)` or `n^(-4/11) (log n)^(1/3)`.
    pub fn pretty(&self) -> String {
        let mut s = format!("n^(-{})", self.alpha);
        if self.beta != Rational64::from_integer(0) {
            s.push_str(&format!(" (log n)^({})", self.beta));
        }
        s
    }
}

/// The larger (slower) of two rates under the asymptotic-size order.
fn slower(a: Rate, b: Rate) -> Rate {
    if a.dominates(&b) {
        b
    } else {
        a
    }
}

/// Dimension regime of the rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeKind {
    LowDim,
    MidDim,
    HighDim,
}

impl RegimeKind {
    pub fn label(&self) -> &'static str {
        match self {
            RegimeKind::LowDim => "low-dim",
            RegimeKind::MidDim => "mid-dim",
            RegimeKind::HighDim => "high-dim",
        }
    }
}

/// Regime classification together with the phase-transition thresholds
/// `(p + 2, 3p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub thresholds: (u32, u32),
}

fn check_dp(d: usize, p: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Dimension(format!("need d >= 2, got {d}")));
    }
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel order p must be even and >= 2, got {p}"
        )));
    }
    Ok(())
}

/// Classifies the dimension `d` against the kernel order `p`: low if
/// `d < p + 2`, mid if `p + 2 <= d < 3p`, high if `d >= 3p`.
pub fn classify_regime(d: usize, p: usize) -> Result<Regime> {
    check_dp(d, p)?;
    let kind = if d < p + 2 {
        RegimeKind::LowDim
    } else if d < 3 * p {
        RegimeKind::MidDim
    } else {
        RegimeKind::HighDim
    };
    Ok(Regime {
        kind,
        thresholds: ((p + 2) as u32, (3 * p) as u32),
    })
}

/// Second-stage convergence rate under the regime-optimal bandwidth:
/// `n^(-p/(2p+1))` (low), `n^(-2p/(3p+d)) (log n)^(1/3)` (mid),
/// `n^(-p/d) (log n)^(2p/d)` (high).
pub fn theoretical_rate(d: usize, p: usize) -> Result<(Rate, Regime)> {
    let regime = classify_regime(d, p)?;
    let (d, p) = (d as i64, p as i64);
    let rate = match regime.kind {
        RegimeKind::LowDim => Rate::from_ints(p, 2 * p + 1, 0, 1),
        RegimeKind::MidDim => Rate::from_ints(2 * p, 3 * p + d, 1, 3),
        RegimeKind::HighDim => Rate::from_ints(p, d, 2 * p, d),
    };
    Ok((rate, regime))
}

/// Regime-optimal bandwidth for the Gaussian (order-2) kernel: `n^(-1/5)`
/// for `d < 4`, `n^(-2/(d+6))` for `4 <= d < 6`, `(n / log^2 n)^(-1/d)` for
/// `d >= 6`.
pub fn optimal_bandwidth(d: usize, n: usize, p: usize) -> Result<f64> {
    check_dp(d, p)?;
    if p != 2 {
        return Err(Error::InvalidArgument(format!(
            "optimal_bandwidth implements the p = 2 path only, got p = {p} \
             (symbolic exponents remain available via theoretical_rate)"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let b = match classify_regime(d, p)?.kind {
        RegimeKind::LowDim => nf.powf(-0.2),
        RegimeKind::MidDim => nf.powf(-2.0 / (d as f64 + 6.0)),
        RegimeKind::HighDim => (nf / nf.ln().powi(2)).powf(-1.0 / d as f64),
    };
    Ok(b)
}

/// Symbolic form of the regime-optimal bandwidth, for rate algebra.
pub fn optimal_bandwidth_rate(d: usize, p: usize) -> Result<Rate> {
    check_dp(d, p)?;
    if p != 2 {
        return Err(Error::InvalidArgument("p = 2 path only".into()));
    }
    let di = d as i64;
    Ok(match classify_regime(d, p)?.kind {
        RegimeKind::LowDim => Rate::from_ints(1, 5, 0, 1),
        RegimeKind::MidDim => Rate::from_ints(2, di + 6, 0, 1),
        // (n / log^2 n)^(-1/d) = n^(-1/d) (log n)^(2/d)
        RegimeKind::HighDim => Rate::from_ints(1, di, 2, di),
    })
}

/// First-stage sup-norm rate `a_n = (n b^d / log n)^(-1/2) + b^2` of the
/// kernel regression for a pure power bandwidth `b = n^(-gamma_b)`, returned
/// as the slower of the variance and bias terms.
pub fn first_stage_rate(d: usize, gamma_b: Rational64) -> Result<Rate> {
    if d < 1 {
        return Err(Error::Dimension("need d >= 1".into()));
    }
    let bandwidth = Rate::new(gamma_b, Rational64::from_integer(0));
    first_stage_rate_of(d, bandwidth)
}

/// General form of [`first_stage_rate`] for a bandwidth with log factors,
/// `b = n^(-alpha_b) (log n)^(beta_b)`. Errors when the implied `a_n` does
/// not vanish (the first stage would be inconsistent).
pub fn first_stage_rate_of(d: usize, bandwidth: Rate) -> Result<Rate> {
    let di = Rational64::from_integer(d as i64);
    let half = Rational64::new(1, 2);
    // n b^d / log n = n^(1 - d*alpha_b) (log n)^(d*beta_b - 1)
    let variance = Rate::new(
        (Rational64::from_integer(1) - di * bandwidth.alpha) * half,
        (Rational64::from_integer(1) - di * bandwidth.beta) * half,
    );
    let bias = Rate::new(
        bandwidth.alpha * Rational64::from_integer(2),
        bandwidth.beta * Rational64::from_integer(2),
    );
    let a_n = slower(variance, bias);
    if !a_n.vanishes() {
        return Err(Error::InvalidArgument(format!(
            "first-stage rate {} does not vanish: bandwidth decays too fast \
             for dimension {d}",
            a_n.pretty()
        )));
    }
    Ok(a_n)
}

/// Multi-index rate bound `max{ n^(-1/3) a_n^(2/3), u_n, v_n }`.
pub fn combine_rates(a_n: Rate, u_n: Rate, v_n: Rate) -> Rate {
    let third = Rational64::new(1, 3);
    let two_thirds = Rational64::new(2, 3);
    let first = Rate::new(third + two_thirds * a_n.alpha, two_thirds * a_n.beta);
    slower(slower(first, u_n), v_n)
}
