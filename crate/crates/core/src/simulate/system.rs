use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::scalar::Real;
use crate::stable::StableSpec;

/// Slow drift `(x, y, theta) -> out` with `out` in R^n.
pub type SlowDrift<T> = Arc<dyn Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync>;
/// Map of the joint state `(x, y) -> out`.
pub type StateMap<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;
/// Sensor `x -> out` with `out` in R^d.
pub type SensorMap<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;

/// Fast-component dynamics before the `1/epsilon` time scaling.
#[derive(Clone)]
pub enum FastDynamics<T> {
    /// `f2 = -rate * y`, `g2 = intensity * I`, independent of `x`.
    Linear { rate: T, intensity: T },
    /// Arbitrary drift and optional `m x m` diffusion (row-major).
    General {
        drift: StateMap<T>,
        diffusion: Option<StateMap<T>>,
    },
}

impl<T: Real> FastDynamics<T> {
    pub fn depends_on_slow(&self) -> bool {
        matches!(self, FastDynamics::General { .. })
    }
}

/// Observation channel `dZ = h(X) dt + noise_scale dW`.
#[derive(Clone)]
pub struct Sensor<T> {
    pub h: SensorMap<T>,
    pub dim: usize,
    pub noise_scale: T,
}

impl<T: Real> Sensor<T> {
    pub fn new(dim: usize, noise_scale: T, h: SensorMap<T>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("sensor.dim", "observation dimension must be positive"));
        }
        if !(noise_scale > T::zero()) {
            return Err(domain("obs_noise_scale", "observation noise scale must be positive"));
        }
        Ok(Self { h, dim, noise_scale })
    }

    /// Identity sensor on a scalar slow state.
    pub fn identity(noise_scale: T) -> Result<Self> {
        Self::new(1, noise_scale, Arc::new(|x: &[T], out: &mut [T]| out[0] = x[0]))
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        (self.h)(x, &mut out);
        out
    }
}

/// Coupled slow-fast signal with optional observation channel:
///
/// ```text
/// dX = f1(X, Y; θ) dt + g1(X, Y) dB1 + σ1 dL1
/// dY = f2(X, Y)/ε dt + g2(X, Y)/√ε dB2 + ε^{-1/α2} dL2
/// dZ = h(X) dt + r dW
/// ```
#[derive(Clone)]
pub struct SlowFastSystem<T> {
    pub name: String,
    pub slow_dim: usize,
    pub fast_dim: usize,
    pub theta_dim: usize,
    pub slow_drift: SlowDrift<T>,
    /// `g1`, an `n x n` row-major matrix; `None` means zero.
    pub slow_diffusion: Option<StateMap<T>>,
    pub slow_noise: Option<StableSpec<T>>,
    pub fast: FastDynamics<T>,
    pub fast_noise: Option<StableSpec<T>>,
    pub epsilon: T,
    pub sensor: Option<Sensor<T>>,
}

impl<T: Real> fmt::Debug for SlowFastSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlowFastSystem")
            .field("name", &self.name)
            .field("slow_dim", &self.slow_dim)
            .field("fast_dim", &self.fast_dim)
            .field("theta_dim", &self.theta_dim)
            .field("slow_noise", &self.slow_noise)
            .field("fast_noise", &self.fast_noise)
            .field("epsilon", &self.epsilon)
            .field("observed", &self.sensor.is_some())
            .finish()
    }
}

impl<T: Real> SlowFastSystem<T> {
    pub fn new(
        name: impl Into<String>,
        slow_dim: usize,
        fast_dim: usize,
        theta_dim: usize,
        slow_drift: SlowDrift<T>,
        fast: FastDynamics<T>,
        epsilon: T,
    ) -> Result<Self> {
        let sys = Self {
            name: name.into(),
            slow_dim,
            fast_dim,
            theta_dim,
            slow_drift,
            slow_diffusion: None,
            slow_noise: None,
            fast,
            fast_noise: None,
            epsilon,
            sensor: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_slow_diffusion(mut self, g1: StateMap<T>) -> Self {
        self.slow_diffusion = Some(g1);
        self
    }

    pub fn with_slow_noise(mut self, spec: StableSpec<T>) -> Result<Self> {
        self.slow_noise = Some(spec);
        self.validate()?;
        Ok(self)
    }

    pub fn with_fast_noise(mut self, spec: StableSpec<T>) -> Result<Self> {
        self.fast_noise = Some(spec);
        self.validate()?;
        Ok(self)
    }

    pub fn with_sensor(mut self, sensor: Sensor<T>) -> Self {
        self.sensor = Some(sensor);
        self
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return Err(domain("epsilon", format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.slow_dim == 0 {
            return Err(domain("slow_dim", "slow dimension must be positive"));
        }
        if let Some(s) = &self.slow_noise {
            if s.dim != self.slow_dim {
                return Err(Error::Dimension(format!(
                    "slow noise dim {} != slow dim {}",
                    s.dim, self.slow_dim
                )));
            }
        }
        if let Some(s) = &self.fast_noise {
            if s.dim != self.fast_dim {
                return Err(Error::Dimension(format!(
                    "fast noise dim {} != fast dim {}",
                    s.dim, self.fast_dim
                )));
            }
        }
        if let FastDynamics::Linear { rate, intensity } = &self.fast {
            if self.fast_dim > 0 && !(*rate > T::zero()) {
                return Err(domain("fast.rate", "linear fast drift needs a positive rate"));
            }
            if !(*intensity >= T::zero()) {
                return Err(domain("fast.intensity", "diffusion intensity must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn slow_drift_at(&self, x: &[T], y: &[T], theta: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.slow_dim];
        (self.slow_drift)(x, y, theta, &mut out);
        out
    }

    /// `f2(x, y)` without the `1/epsilon` factor.
    pub fn fast_drift_at(&self, x: &[T], y: &[T], out: &mut [T]) {
        match &self.fast {
            FastDynamics::Linear { rate, .. } => {
                for (o, &v) in out.iter_mut().zip(y) {
                    *o = -*rate * v;
                }
            }
            FastDynamics::General { drift, .. } => drift(x, y, out),
        }
    }

    /// Adds `g2(x, y) * noise` to `out`; `noise` has length `m`.
    pub fn apply_fast_diffusion(&self, x: &[T], y: &[T], noise: &[T], out: &mut [T], scratch: &mut [T]) {
        match &self.fast {
            FastDynamics::Linear { intensity, .. } => {
                for (o, &z) in out.iter_mut().zip(noise) {
                    *o += *intensity * z;
                }
            }
            FastDynamics::General { diffusion: Some(g2), .. } => {
                g2(x, y, scratch);
                matvec_add(scratch, noise, out);
            }
            FastDynamics::General { diffusion: None, .. } => {}
        }
    }

    pub fn has_fast_diffusion(&self) -> bool {
        match &self.fast {
            FastDynamics::Linear { intensity, .. } => *intensity > T::zero(),
            FastDynamics::General { diffusion, .. } => diffusion.is_some(),
        }
    }
}

/// `out += a * v` for row-major square `a`.
pub(crate) fn matvec_add<T: Real>(a: &[T], v: &[T], out: &mut [T]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * n..(i + 1) * n];
        *o += row.iter().zip(v).map(|(&r, &z)| r * z).sum::<T>();
    }
}
