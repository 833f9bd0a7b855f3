//! Float math shims so the crate builds without `std`.

#[cfg(feature = "std")]
mod imp {
    #[inline(always)]
    pub fn exp32(x: f32) -> f32 {
        x.exp()
    }
    #[inline(always)]
    pub fn ln32(x: f32) -> f32 {
        x.ln()
    }
    #[inline(always)]
    pub fn exp64(x: f64) -> f64 {
        x.exp()
    }
    #[inline(always)]
    pub fn ln64(x: f64) -> f64 {
        x.ln()
    }
    #[inline(always)]
    pub fn sqrt64(x: f64) -> f64 {
        x.sqrt()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    #[inline(always)]
    pub fn exp32(x: f32) -> f32 {
        libm::expf(x)
    }
    #[inline(always)]
    pub fn ln32(x: f32) -> f32 {
        libm::logf(x)
    }
    #[inline(always)]
    pub fn exp64(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline(always)]
    pub fn ln64(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline(always)]
    pub fn sqrt64(x: f64) -> f64 {
        libm::sqrt(x)
    }
}

pub(crate) use imp::{exp32, exp64, ln32, ln64, sqrt64};
