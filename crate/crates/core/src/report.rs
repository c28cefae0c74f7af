//! Cumulant reports shared by the three routes.

use serde::Serialize;

/// Which pipeline produced a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Trajectories,
    ExactMgf,
    SlowDriving,
    IonClosedForm,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Trajectories => "trajectories",
            Route::ExactMgf => "exact-mgf",
            Route::SlowDriving => "slow-driving",
            Route::IonClosedForm => "ion-closed-form",
        }
    }
}

/// A number with the route that produced it and its error estimate
/// (statistical standard error, or integrator/stencil tolerance).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tagged {
    pub value: f64,
    pub route: Route,
    pub tol: f64,
}

impl Tagged {
    pub fn new(value: f64, route: Route, tol: f64) -> Self {
        Self { value, route, tol }
    }
}

/// One time-integrand sample, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct IntegrandSample {
    pub t: f64,
    pub mean_sigma: f64,
    pub var_sigma: f64,
    pub mean_w_tilde: f64,
    pub var_w: f64,
    pub skew_sigma: f64,
}

/// First two cumulants of `(σ, w)` plus the derived FDR/TUR quantities.
#[derive(Debug, Clone, Serialize)]
pub struct CumulantReport {
    pub route: Route,
    pub mean_sigma: Tagged,
    pub var_sigma: Tagged,
    /// `⟨w⟩ − 𝒲`.
    pub mean_w_tilde: Tagged,
    pub var_w: Tagged,
    pub adiabatic_work: Option<Tagged>,
    pub delta_i_sigma: Option<Tagged>,
    pub delta_i_w: Option<Tagged>,
    /// `⟨Δσ²⟩ − 2⟨σ⟩`.
    pub fdr_gap: Tagged,
    /// `⟨Δσ²⟩ − 2(⟨σ⟩ + ΔI_σ)`, zero when the refined FDR holds.
    pub fdr_residual: Option<Tagged>,
    /// `⟨Δw²⟩⟨σ⟩ / (⟨w⟩ − 𝒲)²`; `None` without dissipation.
    pub tur_ratio: Option<Tagged>,
    pub cov_sigma_w: Option<Tagged>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub integrands: Vec<IntegrandSample>,
}

impl CumulantReport {
    /// Assemble the derived quantities from the four base cumulants.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        route: Route,
        mean_sigma: (f64, f64),
        var_sigma: (f64, f64),
        mean_w_tilde: (f64, f64),
        var_w: (f64, f64),
        adiabatic_work: Option<(f64, f64)>,
        delta_i_sigma: Option<(f64, f64)>,
        delta_i_w: Option<(f64, f64)>,
    ) -> Self {
        let t = |(v, e): (f64, f64)| Tagged::new(v, route, e);
        let gap = var_sigma.0 - 2.0 * mean_sigma.0;
        let gap_tol = var_sigma.1 + 2.0 * mean_sigma.1;
        let tur = if mean_w_tilde.0.powi(2) >= 1e-20 {
            let r = var_w.0 * mean_sigma.0 / mean_w_tilde.0.powi(2);
            let rel = var_w.1 / var_w.0.abs().max(1e-300)
                + mean_sigma.1 / mean_sigma.0.abs().max(1e-300)
                + 2.0 * mean_w_tilde.1 / mean_w_tilde.0.abs();
            Some(Tagged::new(r, route, r.abs() * rel))
        } else {
            None
        };
        Self {
            route,
            mean_sigma: t(mean_sigma),
            var_sigma: t(var_sigma),
            mean_w_tilde: t(mean_w_tilde),
            var_w: t(var_w),
            adiabatic_work: adiabatic_work.map(t),
            delta_i_sigma: delta_i_sigma.map(t),
            delta_i_w: delta_i_w.map(t),
            fdr_gap: Tagged::new(gap, route, gap_tol),
            fdr_residual: delta_i_sigma
                .map(|(d, e)| Tagged::new(gap - 2.0 * d, route, gap_tol + 2.0 * e)),
            tur_ratio: tur,
            cov_sigma_w: None,
            integrands: Vec::new(),
        }
    }

    /// `⟨w⟩ = 𝒲 + (⟨w⟩ − 𝒲)` when the adiabatic work is known.
    pub fn mean_w(&self) -> Option<f64> {
        self.adiabatic_work.map(|a| a.value + self.mean_w_tilde.value)
    }
}
