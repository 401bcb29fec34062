use super::Dataset;
use crate::error::{Error, Result};

/// Exact geometry summary of a dataset and whether the near-orthogonality
/// hypotheses of the two main results hold for a given leak `gamma`.
///
/// Comparisons are exact (`>=` with no tolerance).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityCertificate {
    pub n: usize,
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// `R = r_max / r_min`.
    pub ratio_r: f64,
    /// `max_{i≠j} |⟨x_i, x_j⟩|`, zero when `n = 1`.
    pub p: f64,
    /// `C_R = 10 R² γ⁻² + 10`.
    pub c_r: f64,
    /// `r_min² ≥ 3 γ⁻³ R² n p` (gradient-flow / KKT hypothesis).
    pub thm32_holds: bool,
    /// `r_min² ≥ 5 γ⁻² C_R n p` (gradient-descent hypothesis).
    pub thm42_holds: bool,
}

impl OrthogonalityCertificate {
    pub fn from_parts(n: usize, gamma: f64, r_min: f64, r_max: f64, p: f64) -> Self {
        let ratio_r = r_max / r_min;
        let c_r = c_r(ratio_r, gamma);
        let mut cert = Self {
            n,
            gamma,
            r_min,
            r_max,
            ratio_r,
            p,
            c_r,
            thm32_holds: false,
            thm42_holds: false,
        };
        cert.thm32_holds = cert.recompute_thm32();
        cert.thm42_holds = cert.recompute_thm42();
        cert
    }

    pub fn recompute_thm32(&self) -> bool {
        let r2 = self.ratio_r * self.ratio_r;
        self.r_min * self.r_min >= 3.0 * self.gamma.powi(-3) * r2 * self.n as f64 * self.p
    }

    pub fn recompute_thm42(&self) -> bool {
        self.r_min * self.r_min >= 5.0 * self.gamma.powi(-2) * self.c_r * self.n as f64 * self.p
    }

    /// Largest `p` for which the gradient-flow hypothesis would still hold.
    pub fn thm32_p_limit(&self) -> f64 {
        self.r_min * self.r_min * self.gamma.powi(3) / (3.0 * self.ratio_r.powi(2) * self.n as f64)
    }

    pub fn thm42_p_limit(&self) -> f64 {
        self.r_min * self.r_min * self.gamma.powi(2) / (5.0 * self.c_r * self.n as f64)
    }

    pub fn render(&self) -> String {
        format!(
            "n={}\ngamma={}\nr_min={}\nr_max={}\nratio_R={}\np={}\nc_R={}\nthm32_holds={}\nthm42_holds={}\n",
            self.n,
            self.gamma,
            self.r_min,
            self.r_max,
            self.ratio_r,
            self.p,
            self.c_r,
            self.thm32_holds,
            self.thm42_holds
        )
    }
}

/// `C_R = 10 R² γ⁻² + 10`.
pub fn c_r(ratio_r: f64, gamma: f64) -> f64 {
    10.0 * ratio_r * ratio_r / (gamma * gamma) + 10.0
}

/// Exact `O(n² d)` certificate.
pub fn certify(ds: &Dataset, gamma: f64) -> Result<OrthogonalityCertificate> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let g = ds.gram();
    let n = ds.n();
    let mut p = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            p = p.max(g[(i, j)].abs());
        }
    }
    Ok(OrthogonalityCertificate::from_parts(n, gamma, ds.r_min(), ds.r_max(), p))
}
