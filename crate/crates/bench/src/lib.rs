//! Shared inputs for the benchmarks: a decomposed phantom slice of the
//! default size.

use segmic_core::basis::BasisSet;
use segmic_core::decompose::{decompose, DecomposeParams, Decomposition};
use segmic_core::phantom::{generate, PhantomInstance, PhantomSpec};

pub struct Fixture {
    pub phantom: PhantomInstance,
    pub decomposition: Decomposition,
    pub basis: BasisSet,
}

/// Default-size slice at np = 7, bl = 20.
pub fn fixture() -> Fixture {
    let phantom = generate(&PhantomSpec::new(7.0, 20.0, 0)).expect("default spec is valid");
    let decomposition =
        decompose(&phantom.corrupted, &DecomposeParams::default()).expect("default params");
    let basis = BasisSet::legendre(phantom.spec.width, phantom.spec.height, 3).expect("order 3");
    Fixture {
        phantom,
        decomposition,
        basis,
    }
}
