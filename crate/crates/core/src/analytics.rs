// SPDX-License-Identifier: Apache-2.0

//! Closed-form M/G/1 results for a best-effort FIFO link shared by one
//! delay-sensitive (DS) flow and one background (NDS) flow.
//!
//! All rates are in packets/second and all times in seconds. A link is
//! described by a [`ServiceModel`] (mean service time and its coefficient of
//! variation) and loaded by a [`LinkLoad`]. Both flows see the same mean
//! sojourn time
//!
//! ```text
//! E[D] = Γ(λ, θ) / (μ − λ),   Γ(λ, θ) = 1 − a + aθ,   θ = (1 + C_S²) / 2
//! ```
//!
//! The DS flow is inside the low-latency region (LLR) while its mean sojourn
//! time does not exceed its mean inter-arrival time `1/λs`.
//!
//! Every function is pure. Inputs at or above full utilization are rejected
//! with [`Error::UnstableLink`] instead of producing infinities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for region-boundary comparisons and allocation clamping.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Service-time distribution of the link, summarized by its first two moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    mean_service_time: f64,
    cv: f64,
}

impl ServiceModel {
    pub fn new(mean_service_time: f64, cv: f64) -> Result<Self> {
        if !(mean_service_time.is_finite() && mean_service_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean service time must be positive, got {mean_service_time}"
            )));
        }
        if !(cv.is_finite() && cv >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coefficient of variation must be >= 0, got {cv}"
            )));
        }
        Ok(Self {
            mean_service_time,
            cv,
        })
    }

    /// Builds the model from the service rate `mu` (packets/second).
    pub fn from_rate(mu: f64, cv: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "service rate must be positive, got {mu}"
            )));
        }
        Self::new(1.0 / mu, cv)
    }

    /// Service model of a link of `link_rate` bits/s carrying packets of
    /// `mean_packet_bits` bits on average.
    pub fn from_link(link_rate: f64, mean_packet_bits: f64, cv: f64) -> Result<Self> {
        if !(link_rate.is_finite() && link_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "link rate must be positive, got {link_rate}"
            )));
        }
        Self::new(mean_packet_bits / link_rate, cv)
    }

    pub fn mean_service_time(&self) -> f64 {
        self.mean_service_time
    }

    pub fn cv(&self) -> f64 {
        self.cv
    }

    /// Service rate in packets/second.
    pub fn mu(&self) -> f64 {
        1.0 / self.mean_service_time
    }

    /// Variability factor `(1 + C_S²) / 2`.
    pub fn theta(&self) -> f64 {
        (1.0 + self.cv * self.cv) / 2.0
    }

    /// `E[S²] = E[S]² (1 + C_S²)`.
    pub fn second_moment(&self) -> f64 {
        self.mean_service_time * self.mean_service_time * (1.0 + self.cv * self.cv)
    }
}

/// Offered DS and NDS packet rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLoad {
    pub lambda_s: f64,
    pub lambda_b: f64,
}

impl LinkLoad {
    pub fn new(lambda_s: f64, lambda_b: f64) -> Result<Self> {
        check_rate("lambda_s", lambda_s)?;
        check_rate("lambda_b", lambda_b)?;
        Ok(Self { lambda_s, lambda_b })
    }

    pub fn total(&self) -> f64 {
        self.lambda_s + self.lambda_b
    }

    pub fn utilization(&self, svc: &ServiceModel) -> f64 {
        self.total() / svc.mu()
    }

    fn validate(&self) -> Result<()> {
        check_rate("lambda_s", self.lambda_s)?;
        check_rate("lambda_b", self.lambda_b)
    }

    fn require_stable(&self, svc: &ServiceModel) -> Result<()> {
        self.validate()?;
        let utilization = self.utilization(svc);
        if utilization >= 1.0 {
            return Err(Error::UnstableLink { utilization });
        }
        Ok(())
    }
}

fn check_rate(name: &str, rate: f64) -> Result<()> {
    if rate.is_finite() && rate >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be a finite non-negative rate, got {rate}"
        )))
    }
}

fn require_positive_ds(lambda_s: f64) -> Result<()> {
    if lambda_s.is_finite() && lambda_s > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda_s must be strictly positive, got {lambda_s}"
        )))
    }
}

fn clamp_allocation(x: f64) -> f64 {
    if x < 0.0 && x > -BOUNDARY_TOL {
        0.0
    } else {
        x
    }
}

/// Ratio between the M/G/1 and M/M/1 mean delays at total rate `load_total`.
pub fn gamma_ratio(load_total: f64, svc: &ServiceModel) -> Result<f64> {
    check_rate("load_total", load_total)?;
    let a = load_total / svc.mu();
    Ok(1.0 - a + a * svc.theta())
}

/// Mean sojourn time of a packet of either flow.
pub fn mean_delay(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    load.require_stable(svc)?;
    let lambda = load.total();
    Ok(gamma_ratio(lambda, svc)? / (svc.mu() - lambda))
}

/// Derivative of [`mean_delay`] with respect to the total arrival rate.
pub fn mean_delay_slope(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    load.require_stable(svc)?;
    let gap = svc.mu() - load.total();
    Ok(svc.theta() / (gap * gap))
}

/// Mean number of DS packets in the link (Little's law on the DS flow).
pub fn mean_packets(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    Ok(load.lambda_s * mean_delay(load, svc)?)
}

/// True when the link is stable and the DS mean delay is at most `1/λs`.
pub fn in_llr(load: LinkLoad, svc: &ServiceModel) -> Result<bool> {
    load.validate()?;
    require_positive_ds(load.lambda_s)?;
    if load.utilization(svc) >= 1.0 {
        return Ok(false);
    }
    let delay = mean_delay(load, svc)?;
    Ok(delay <= 1.0 / load.lambda_s + BOUNDARY_TOL)
}

/// Largest DS rate inside the LLR on an otherwise empty link: `μ / (1 + √θ)`.
pub fn llr_limit(svc: &ServiceModel) -> f64 {
    svc.mu() / (1.0 + svc.theta().sqrt())
}

/// `θ / Γ(λs, θ)`; `β·λs` is the capacity that must stay idle at the max
/// allocation. Evaluated at the DS rate alone.
pub fn beta(lambda_s: f64, svc: &ServiceModel) -> Result<f64> {
    Ok(svc.theta() / gamma_ratio(lambda_s, svc)?)
}

/// Capacity multiplier of the max allocation: `λb⁺ = μ − κ⁺ λs`.
pub fn kappa_plus(lambda_s: f64, svc: &ServiceModel) -> Result<f64> {
    Ok(1.0 + beta(lambda_s, svc)?)
}

fn require_in_region(lambda_s: f64, svc: &ServiceModel) -> Result<()> {
    require_positive_ds(lambda_s)?;
    let limit = llr_limit(svc);
    if lambda_s > limit + BOUNDARY_TOL {
        return Err(Error::OutOfRegion { lambda_s, limit });
    }
    Ok(())
}

/// Highest NDS rate that keeps the DS flow inside the LLR.
pub fn max_alloc(lambda_s: f64, svc: &ServiceModel) -> Result<f64> {
    require_in_region(lambda_s, svc)?;
    let alloc = (svc.mu() - lambda_s) / gamma_ratio(lambda_s, svc)? - lambda_s;
    Ok(clamp_allocation(alloc))
}

/// Capacity multiplier of the proportional-fair allocation: `λb* = μ − κ* λs`.
pub fn kappa_star(lambda_s: f64, svc: &ServiceModel) -> Result<f64> {
    require_positive_ds(lambda_s)?;
    let mu = svc.mu();
    if lambda_s >= mu {
        return Err(Error::InvalidArgument(format!(
            "lambda_s {lambda_s} must be below the service rate {mu}"
        )));
    }
    Ok(1.0 + (beta(lambda_s, svc)? * (mu - lambda_s) / lambda_s).sqrt())
}

/// Proportional-fair low-latency (PFLL) NDS allocation, the maximizer of [`gain`].
pub fn pfll_alloc(lambda_s: f64, svc: &ServiceModel) -> Result<f64> {
    require_in_region(lambda_s, svc)?;
    let mu = svc.mu();
    let root = (beta(lambda_s, svc)? * lambda_s * (mu - lambda_s)).sqrt();
    Ok(clamp_allocation(mu - lambda_s - root))
}

/// NDS throughput gain relative to the DS-only link, `λb / λs`.
pub fn throughput_gain(load: LinkLoad) -> Result<f64> {
    load.validate()?;
    require_positive_ds(load.lambda_s)?;
    Ok(load.lambda_b / load.lambda_s)
}

/// Relative increase of the DS mean delay caused by the NDS flow.
pub fn delay_loss(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    load.require_stable(svc)?;
    let residual = svc.mu() - load.lambda_s - load.lambda_b;
    Ok(beta(load.lambda_s, svc)? * load.lambda_b / residual)
}

/// Throughput gain minus delay loss.
pub fn gain(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    load.require_stable(svc)?;
    require_positive_ds(load.lambda_s)?;
    let residual = svc.mu() - load.total();
    Ok(load.lambda_b * (1.0 / load.lambda_s - beta(load.lambda_s, svc)? / residual))
}

/// `dg/dλb`.
pub fn gain_derivative(load: LinkLoad, svc: &ServiceModel) -> Result<f64> {
    load.require_stable(svc)?;
    require_positive_ds(load.lambda_s)?;
    let spare = svc.mu() - load.lambda_s;
    let residual = spare - load.lambda_b;
    Ok(1.0 / load.lambda_s - beta(load.lambda_s, svc)? * spare / (residual * residual))
}

/// Alternative trade-off objective `λb (D(λb⁺) − D(λb))`.
///
/// `delay_at` maps an NDS rate to a DS mean delay. It may be the closed form
/// ([`analytic_delay`]) or an estimate interpolated from simulation runs.
pub fn f_alt<F>(lambda_b: f64, lambda_b_plus: f64, delay_at: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    check_rate("lambda_b", lambda_b)?;
    if lambda_b > lambda_b_plus + BOUNDARY_TOL {
        return Err(Error::AboveMaxAllocation {
            lambda_b,
            lambda_b_plus,
        });
    }
    Ok(lambda_b * (delay_at(lambda_b_plus)? - delay_at(lambda_b)?))
}

/// Closed-form DS delay as a function of the NDS rate, for use with [`f_alt`].
pub fn analytic_delay(lambda_s: f64, svc: ServiceModel) -> impl Fn(f64) -> Result<f64> {
    move |lambda_b| mean_delay(LinkLoad::new(lambda_s, lambda_b)?, &svc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svc(cv: f64) -> ServiceModel {
        ServiceModel::from_rate(1.0, cv).unwrap()
    }

    fn load(s: f64, b: f64) -> LinkLoad {
        LinkLoad::new(s, b).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn service_model_invariants() {
        assert_eq!(svc(0.0).theta(), 0.5);
        assert_eq!(svc(1.0).theta(), 1.0);
        assert!(svc(0.3).theta() > 0.5);
        assert!(ServiceModel::new(0.0, 1.0).is_err());
        assert!(ServiceModel::new(1.0, -0.1).is_err());
        let s = ServiceModel::new(0.5, 2.0).unwrap();
        assert_eq!(s.mu(), 2.0);
        assert!(close(s.second_moment(), 0.25 * 5.0, 1e-15));
    }

    #[test]
    fn gamma_ratio_examples() {
        assert_eq!(gamma_ratio(0.0, &svc(0.7)).unwrap(), 1.0);
        assert_eq!(gamma_ratio(0.42, &svc(1.0)).unwrap(), 1.0);
        assert!(close(gamma_ratio(0.1, &svc(0.0)).unwrap(), 0.95, 1e-15));
        assert!(gamma_ratio(-0.1, &svc(1.0)).is_err());
    }

    #[test]
    fn mean_delay_examples() {
        assert_eq!(mean_delay(load(0.0, 0.0), &svc(1.0)).unwrap(), 1.0);
        assert!(close(mean_delay(load(0.1, 0.6), &svc(1.0)).unwrap(), 1.0 / 0.3, 1e-12));
        // At the max allocation the delay equals 1/λs.
        let s = svc(0.0);
        let bp = max_alloc(0.1, &s).unwrap();
        assert!(close(bp, 0.8474, 1e-4));
        assert!(close(mean_delay(load(0.1, bp), &s).unwrap(), 10.0, 1e-9));
        assert!(matches!(
            mean_delay(load(0.5, 0.5), &s),
            Err(Error::UnstableLink { .. })
        ));
    }

    #[test]
    fn mean_packets_examples() {
        assert_eq!(mean_packets(load(0.0, 0.3), &svc(1.0)).unwrap(), 0.0);
        assert!(close(mean_packets(load(0.25, 0.0), &svc(1.0)).unwrap(), 1.0 / 3.0, 1e-12));
        for cv in [0.0, 1.0, 2.0] {
            let s = svc(cv);
            let n = mean_packets(load(llr_limit(&s), 0.0), &s).unwrap();
            assert!(close(n, 1.0, 1e-12), "cv={cv}: {n}");
        }
    }

    #[test]
    fn in_llr_examples() {
        assert!(in_llr(load(0.3, 0.0), &svc(1.0)).unwrap());
        assert!(in_llr(load(0.5, 0.0), &svc(1.0)).unwrap());
        assert!(!in_llr(load(0.5, 0.1), &svc(1.0)).unwrap());
        assert!(!in_llr(load(0.5, 0.6), &svc(1.0)).unwrap());
        assert!(matches!(
            in_llr(load(0.0, 0.1), &svc(1.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn llr_limit_examples() {
        assert_eq!(llr_limit(&svc(1.0)), 0.5);
        assert!(close(llr_limit(&svc(0.0)), 0.585_786_437_626_905, 1e-12));
        assert!(close(llr_limit(&svc(2.0)), 0.387_425_886_722_793, 1e-12));
    }

    #[test]
    fn beta_and_kappa_examples() {
        assert_eq!(beta(0.37, &svc(1.0)).unwrap(), 1.0);
        assert!(close(beta(0.1, &svc(0.0)).unwrap(), 0.526_315_789_473_684, 1e-12));
        assert_eq!(kappa_plus(0.2, &svc(1.0)).unwrap(), 2.0);
        assert!(close(kappa_plus(0.1, &svc(0.0)).unwrap(), 1.526_315_789_473_684, 1e-12));
        for cv in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let s = svc(cv);
            let lp = llr_limit(&s);
            assert!(close(beta(lp, &s).unwrap(), s.theta().sqrt(), 1e-12));
        }
    }

    #[test]
    fn max_alloc_examples() {
        assert!(close(max_alloc(0.25, &svc(1.0)).unwrap(), 0.5, 1e-15));
        let s = svc(0.0);
        assert_eq!(max_alloc(llr_limit(&s), &s).unwrap(), 0.0);
        assert!(close(max_alloc(0.05, &s).unwrap(), 0.924_358_974_358_974, 1e-12));
        assert!(matches!(
            max_alloc(0.6, &svc(1.0)),
            Err(Error::OutOfRegion { limit, .. }) if limit == 0.5
        ));
        assert!(max_alloc(0.0, &svc(1.0)).is_err());
    }

    #[test]
    fn kappa_star_examples() {
        assert!(close(kappa_star(0.1, &svc(1.0)).unwrap(), 4.0, 1e-12));
        assert!(close(kappa_star(0.5, &svc(1.0)).unwrap(), 2.0, 1e-12));
        assert!(kappa_star(0.0, &svc(1.0)).is_err());
        assert!(kappa_star(1.0, &svc(1.0)).is_err());
    }

    #[test]
    fn pfll_alloc_examples() {
        assert!(close(pfll_alloc(0.1, &svc(1.0)).unwrap(), 0.6, 1e-12));
        assert_eq!(pfll_alloc(0.5, &svc(1.0)).unwrap(), 0.0);
        assert!(close(pfll_alloc(0.05, &svc(0.0)).unwrap(), 0.793_926_381_604_788, 1e-12));
        assert!(pfll_alloc(0.6, &svc(1.0)).is_err());
    }

    #[test]
    fn gain_components() {
        assert_eq!(throughput_gain(load(0.1, 0.0)).unwrap(), 0.0);
        assert!(close(throughput_gain(load(0.1, 0.6)).unwrap(), 6.0, 1e-12));
        assert_eq!(throughput_gain(load(0.2, 0.2)).unwrap(), 1.0);
        assert!(throughput_gain(load(0.0, 0.2)).is_err());

        assert_eq!(delay_loss(load(0.1, 0.0), &svc(1.0)).unwrap(), 0.0);
        assert!(close(delay_loss(load(0.1, 0.6), &svc(1.0)).unwrap(), 2.0, 1e-12));
        let bstar = pfll_alloc(0.05, &svc(0.0)).unwrap();
        assert!(close(delay_loss(load(0.05, bstar), &svc(0.0)).unwrap(), 2.608_651_855, 1e-8));
        assert!(delay_loss(load(0.5, 0.5), &svc(1.0)).is_err());
    }

    #[test]
    fn gain_examples() {
        assert_eq!(gain(load(0.1, 0.0), &svc(1.0)).unwrap(), 0.0);
        assert!(close(gain(load(0.1, 0.6), &svc(1.0)).unwrap(), 4.0, 1e-12));
        assert!(gain(load(0.1, 0.8), &svc(1.0)).unwrap().abs() < 1e-9);
        assert!(gain(load(0.0, 0.3), &svc(1.0)).is_err());
    }

    #[test]
    fn gain_derivative_examples() {
        let s = svc(1.0);
        assert!(close(gain_derivative(load(0.1, 0.0), &s).unwrap(), 80.0 / 9.0, 1e-12));
        assert!(gain_derivative(load(0.1, 0.6), &s).unwrap().abs() < 1e-9);
        assert!(gain_derivative(load(0.1, 0.8 - 1e-6), &s).unwrap() < 0.0);
    }

    #[test]
    fn f_alt_examples() {
        let s = svc(1.0);
        let d = analytic_delay(0.1, s);
        assert_eq!(f_alt(0.0, 0.8, &d).unwrap(), 0.0);
        assert!(f_alt(0.8, 0.8, &d).unwrap().abs() < 1e-12);
        assert!(matches!(
            f_alt(0.81, 0.8, &d),
            Err(Error::AboveMaxAllocation { .. })
        ));
        // f is Γ(λs)·g for the closed-form delay.
        let v = f_alt(0.6, 0.8, &d).unwrap();
        assert!(close(v, 4.0, 1e-12));
    }

    #[test]
    fn mean_delay_slope_matches_finite_difference() {
        let s = svc(0.4);
        let h = 1e-6;
        let at = |b: f64| mean_delay(load(0.1, b), &s).unwrap();
        let fd = (at(0.5 + h) - at(0.5 - h)) / (2.0 * h);
        let slope = mean_delay_slope(load(0.1, 0.5), &s).unwrap();
        assert!(((fd - slope) / slope).abs() < 1e-6);
    }
}
