//! Physical parameters and the two-state (spin `z`, field `b`) linear model.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

/// Truth parameters of the spin/field plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Collective spin `J` (N/2 for N spin-1/2 particles).
    pub spin: f64,
    /// Gyromagnetic ratio `gamma`.
    pub gyro: f64,
    /// Measurement rate `M` (1/s).
    pub measurement_rate: f64,
    /// Detection quantum efficiency `eta`, in (0, 1].
    pub efficiency: f64,
    /// Field decay rate `gamma_b` (1/s); zero for constant fields.
    pub field_decay: f64,
    /// Field diffusion strength `sigma_bF` (field^2/s).
    pub field_diffusion: f64,
}

impl PlantParams {
    pub fn new(
        spin: f64,
        gyro: f64,
        measurement_rate: f64,
        efficiency: f64,
        field_decay: f64,
        field_diffusion: f64,
    ) -> Result<Self> {
        let p = Self {
            spin,
            gyro,
            measurement_rate,
            efficiency,
            field_decay,
            field_diffusion,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constant-field plant (`gamma_b = sigma_bF = 0`) with unit efficiency.
    pub fn constant_field(spin: f64, gyro: f64, measurement_rate: f64) -> Result<Self> {
        Self::new(spin, gyro, measurement_rate, 1.0, 0.0, 0.0)
    }

    /// Fluctuating field with the given stationary variance `sigma_bFree`.
    pub fn fluctuating(
        spin: f64,
        gyro: f64,
        measurement_rate: f64,
        field_decay: f64,
        free_variance: f64,
    ) -> Result<Self> {
        Self::new(
            spin,
            gyro,
            measurement_rate,
            1.0,
            field_decay,
            2.0 * field_decay * free_variance,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            ("J", self.spin, self.spin > 0.0, "must be > 0"),
            ("gamma", self.gyro, self.gyro > 0.0, "must be > 0"),
            (
                "M",
                self.measurement_rate,
                self.measurement_rate > 0.0,
                "must be > 0",
            ),
            (
                "eta",
                self.efficiency,
                self.efficiency > 0.0 && self.efficiency <= 1.0,
                "must lie in (0, 1]",
            ),
            (
                "gamma_b",
                self.field_decay,
                self.field_decay >= 0.0,
                "must be >= 0",
            ),
            (
                "sigma_bF",
                self.field_diffusion,
                self.field_diffusion >= 0.0,
                "must be >= 0",
            ),
        ];
        for (name, value, ok, reason) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason,
                });
            }
        }
        Ok(())
    }

    /// Same plant with a different spin number.
    pub fn with_spin(&self, spin: f64) -> Result<Self> {
        Self::new(
            spin,
            self.gyro,
            self.measurement_rate,
            self.efficiency,
            self.field_decay,
            self.field_diffusion,
        )
    }

    /// `gamma * J`, the precession gain.
    pub fn gamma_j(&self) -> f64 {
        self.gyro * self.spin
    }

    /// Measurement noise strength `sigma_M = 1/(4 M eta)`.
    pub fn sigma_m(&self) -> f64 {
        1.0 / (4.0 * self.measurement_rate * self.efficiency)
    }

    pub fn sigma_bfree(&self) -> Result<f64> {
        sigma_bfree(self)
    }

    pub fn is_constant_field(&self) -> bool {
        self.field_decay == 0.0 && self.field_diffusion == 0.0
    }
}

/// `sigma_M = 1/(4 M eta)`; `eta = 0` discards the record and is rejected.
pub fn sigma_m(measurement_rate: f64, efficiency: f64) -> Result<f64> {
    if !(measurement_rate > 0.0) {
        return Err(Error::InvalidParameter {
            name: "M",
            value: measurement_rate,
            reason: "must be > 0",
        });
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: efficiency,
            reason: "must lie in (0, 1]; eta = 0 carries no information",
        });
    }
    Ok(1.0 / (4.0 * measurement_rate * efficiency))
}

/// Stationary field variance `sigma_bF / (2 gamma_b)`.
pub fn sigma_bfree(p: &PlantParams) -> Result<f64> {
    if p.field_decay > 0.0 {
        Ok(p.field_diffusion / (2.0 * p.field_decay))
    } else {
        Err(Error::UndefinedStationaryVariance)
    }
}

/// Prior variances of the initial spin component and field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub sigma_z0: f64,
    pub sigma_b0: f64,
}

impl Priors {
    pub fn new(sigma_z0: f64, sigma_b0: f64) -> Result<Self> {
        if !(sigma_z0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_z0",
                value: sigma_z0,
                reason: "must be >= 0",
            });
        }
        if !(sigma_b0 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_b0",
                value: sigma_b0,
                reason: "must be >= 0",
            });
        }
        Ok(Self { sigma_z0, sigma_b0 })
    }

    /// Coherent spin state along x: `sigma_z0 = J/2`.
    pub fn coherent(spin: f64, sigma_b0: f64) -> Result<Self> {
        Self::new(spin / 2.0, sigma_b0)
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_z0, 0.0, 0.0, self.sigma_b0)
    }

    /// Prior held by a designer assuming spin `J'`: the spin variance is
    /// rescaled by `J'/J` (a coherent state has variance `J/2`).
    pub fn for_design(&self, p: &PlantParams, d: &DesignParams) -> Self {
        Self {
            sigma_z0: self.sigma_z0 * d.spin / p.spin,
            sigma_b0: self.sigma_b0,
        }
    }
}

/// Choices made by the observer/controller designer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    /// Spin number `J'` assumed by the estimator.
    pub spin: f64,
    /// Control cost ratio `lambda = sqrt(p/q)`; zero disables control.
    pub lambda: f64,
}

impl DesignParams {
    pub fn new(spin: f64, lambda: f64) -> Result<Self> {
        if !(spin > 0.0) || !spin.is_finite() {
            return Err(Error::InvalidParameter {
                name: "J_prime",
                value: spin,
                reason: "must be > 0",
            });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
                reason: "must be >= 0",
            });
        }
        Ok(Self { spin, lambda })
    }

    /// Design matched to the plant's spin number.
    pub fn matched(p: &PlantParams, lambda: f64) -> Result<Self> {
        Self::new(p.spin, lambda)
    }

    /// The plant as the designer believes it to be.
    pub fn assumed_plant(&self, p: &PlantParams) -> Result<PlantParams> {
        p.with_spin(self.spin)
    }
}

/// `dx = A x dt + B u dt + noise`, `y dt = C x dt + sqrt(sigma_M) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub c: RowVector2<f64>,
    /// Process noise covariance rate.
    pub sigma1: Matrix2<f64>,
    /// Measurement noise strength.
    pub sigma2: f64,
}

pub fn build_system(p: &PlantParams) -> StateSpace {
    let gj = p.gamma_j();
    StateSpace {
        a: Matrix2::new(0.0, gj, 0.0, -p.field_decay),
        b: Vector2::new(gj, 0.0),
        c: RowVector2::new(1.0, 0.0),
        sigma1: Matrix2::new(0.0, 0.0, 0.0, p.field_diffusion),
        sigma2: p.sigma_m(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_matrix_for_large_ensemble() {
        let p = PlantParams::new(1e6, 1e6, 1e4, 1.0, 0.0, 0.0).unwrap();
        let s = build_system(&p);
        assert_eq!(s.a, Matrix2::new(0.0, 1e12, 0.0, 0.0));
    }

    #[test]
    fn field_decay_enters_drift() {
        let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0).unwrap();
        assert_eq!(build_system(&p).a[(1, 1)], -1e5);
    }

    #[test]
    fn output_times_input_is_gamma_j() {
        let p = PlantParams::new(3.5, 2.0, 10.0, 0.7, 4.0, 1.0).unwrap();
        let s = build_system(&p);
        assert_eq!((s.c * s.b)[(0, 0)], 7.0);
        assert!(s.sigma1.symmetric_eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn measurement_noise_strength() {
        assert!((sigma_m(1e4, 1.0).unwrap() - 2.5e-5).abs() < 1e-20);
        assert!((sigma_m(1e4, 0.5).unwrap() - 5e-5).abs() < 1e-20);
        assert!(sigma_m(1e4, 0.0).is_err());
        let mut last = f64::INFINITY;
        for m in [1.0, 10.0, 1e3, 1e6] {
            let s = sigma_m(m, 1.0).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn stationary_field_variance() {
        let p = PlantParams::new(1.0, 1.0, 1.0, 1.0, 1e5, 2e5).unwrap();
        assert_eq!(p.sigma_bfree().unwrap(), 1.0);
        let p0 = PlantParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(p0.sigma_bfree().unwrap(), 0.0);
        let p2 = PlantParams::new(1.0, 1.0, 1.0, 1.0, 1e5, 4e5).unwrap();
        assert_eq!(p2.sigma_bfree().unwrap(), 2.0 * p.sigma_bfree().unwrap());
        let pc = PlantParams::constant_field(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            pc.sigma_bfree(),
            Err(Error::UndefinedStationaryVariance)
        ));
    }

    #[test]
    fn invariants_enforced() {
        assert!(PlantParams::new(0.0, 1.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(PlantParams::new(1.0, 1.0, 1.0, 1.5, 0.0, 0.0).is_err());
        assert!(PlantParams::new(1.0, 1.0, 1.0, 1.0, -1.0, 0.0).is_err());
        assert!(DesignParams::new(1.0, -0.1).is_err());
        assert!(Priors::new(-1.0, 0.0).is_err());
        assert_eq!(Priors::coherent(10.0, 1.0).unwrap().sigma_z0, 5.0);
    }
}
