//! Kernel partial least squares (K-PLS) regression and discriminant analysis
//! with kernel hyperparameters learned by Kernel Flows.
//!
//! The crate is organised bottom-up:
//!
//! * [`pls`]: SIMPLS factor extraction on a covariance matrix.
//! * [`kernels`]: stationary kernels, Gram matrices and kernel centering.
//! * [`kpls`]: SIMPLS run between the centered Gram matrix and the responses.
//! * [`flows`]: stochastic minimization of the Kernel Flows loss over the
//!   log-parameters of a [`kernels::KernelSpec`].
//! * [`metrics`] and [`datasets`]: evaluation and data preparation.
//!
//! ```
//! use kfpls::datasets::gen_peaks;
//! use kfpls::kernels::{KernelFamily, KernelSpec};
//! use kfpls::kpls::fit_kpls;
//!
//! let data = gen_peaks(60, 0.05, 7).unwrap();
//! let spec = KernelSpec::single(KernelFamily::Gaussian, 0.5, 1e-2).unwrap();
//! let model = fit_kpls(data.x_cal.view(), data.y_cal.view(), 6, &spec).unwrap();
//! let y_hat = model.predict(data.x_test.view()).unwrap();
//! assert_eq!(y_hat.dim(), data.y_test.dim());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod flows;
pub mod kernels;
pub mod kpls;
pub mod metrics;
pub mod pls;

pub use error::{Error, Result};

pub(crate) fn ensure_finite<'a, I>(values: I, what: &str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
