//! Named model constructors.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stable::StableSpec;

use super::system::{FastDynamics, Sensor, SlowFastSystem};

/// Parameters a catalog entry may depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    pub alpha: T,
    pub epsilon: T,
}

pub type ModelCtor<T> = Arc<dyn Fn(&ModelParams<T>) -> Result<SlowFastSystem<T>> + Send + Sync>;

/// Registry of named systems, preloaded with `example1` and `example2`.
#[derive(Clone)]
pub struct Catalog<T> {
    entries: BTreeMap<String, ModelCtor<T>>,
}

impl<T: Real> Default for Catalog<T> {
    fn default() -> Self {
        let mut c = Self {
            entries: BTreeMap::new(),
        };
        c.register("example1", Arc::new(|p: &ModelParams<T>| example1(p.alpha, p.epsilon)));
        c.register("example2", Arc::new(|p: &ModelParams<T>| example2(p.alpha, p.epsilon)));
        c
    }
}

impl<T: Real> Catalog<T> {
    pub fn register(&mut self, name: &str, ctor: ModelCtor<T>) {
        self.entries.insert(name.to_string(), ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &ModelParams<T>) -> Result<SlowFastSystem<T>> {
        let ctor = self
            .entries
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
        ctor(params)
    }
}

/// Builds a model from the default catalog.
pub fn catalog<T: Real>(name: &str, params: &ModelParams<T>) -> Result<SlowFastSystem<T>> {
    Catalog::default().build(name, params)
}

/// `dx = (-x + cos(θx) e^{-y²}) dt`, `dy = -y/ε dt + ε^{-1/α} dL`.
pub fn example1<T: Real>(alpha: T, epsilon: T) -> Result<SlowFastSystem<T>> {
    let drift = Arc::new(|x: &[T], y: &[T], theta: &[T], out: &mut [T]| {
        out[0] = -x[0] + (theta[0] * x[0]).cos() * (-y[0] * y[0]).exp();
    });
    SlowFastSystem::new(
        "example1",
        1,
        1,
        1,
        drift,
        FastDynamics::Linear {
            rate: T::one(),
            intensity: T::zero(),
        },
        epsilon,
    )?
    .with_fast_noise(StableSpec::new(alpha, T::one(), 1)?)
}

/// `dX = 0.1(X - X³)Y² dt + 0.01^{1/α} dL`, `dY = -Y/ε dt + 2/√ε dB`,
/// `dZ = X dt + √0.2 dW`.
pub fn example2<T: Real>(alpha: T, epsilon: T) -> Result<SlowFastSystem<T>> {
    let tenth = T::lit(0.1);
    let drift = Arc::new(move |x: &[T], y: &[T], _theta: &[T], out: &mut [T]| {
        let v = x[0];
        out[0] = tenth * (v - v * v * v) * y[0] * y[0];
    });
    let sigma = T::lit(0.01).powf(alpha.recip());
    Ok(SlowFastSystem::new(
        "example2",
        1,
        1,
        0,
        drift,
        FastDynamics::Linear {
            rate: T::one(),
            intensity: T::lit(2.0),
        },
        epsilon,
    )?
    .with_slow_noise(StableSpec::new(alpha, sigma, 1)?)?
    .with_sensor(Sensor::identity(T::lit(0.2).sqrt())?))
}
