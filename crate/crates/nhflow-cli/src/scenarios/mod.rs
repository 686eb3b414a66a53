//! Scenario registry: every runnable verification scenario with its
//! description and the property it certifies.

pub mod eps;
pub mod lplusr;
pub mod lr;

use anyhow::Result;

use crate::config::ResolvedConfig;
use crate::report::{Check, TrajectoryDump};

pub struct ScenarioResult {
    pub checks: Vec<Check>,
    pub dumps: Vec<TrajectoryDump>,
}

pub type ScenarioFn = fn(&ResolvedConfig) -> Result<ScenarioResult>;

pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// The property the scenario certifies.
    pub verifies: &'static str,
    pub run: ScenarioFn,
}

/// All registered scenarios, each name appearing exactly once.
pub fn registry() -> &'static [ScenarioInfo] {
    &[
        ScenarioInfo {
            name: "suslov",
            description: "body with rotations restricted to the leading axes",
            verifies: "constants-of-motion regime, one-parameter group motion, constraints",
            run: eps::suslov,
        },
        ScenarioInfo {
            name: "suslov_fk",
            description: "so(4) body with two distinguished axes on its invariant tori",
            verifies: "rotation-number ratio against the closed-form frequencies",
            run: eps::suslov_fk,
        },
        ScenarioInfo {
            name: "eps_so4_cartan",
            description: "so(4) body with a single two-plane constraint",
            verifies: "commuting constraint image, quadratic integral, flat measure",
            run: eps::eps_so4_cartan,
        },
        ScenarioInfo {
            name: "eps_chain",
            description: "operator adapted to so(2) ⊂ so(3) ⊂ so(4)",
            verifies: "split equations match multiplier elimination to 1e-10",
            run: eps::eps_chain,
        },
        ScenarioInfo {
            name: "veselova3",
            description: "3D constrained body in the (Omega, gamma) chart",
            verifies: "invariant-measure exponent and the algebra-form oracle",
            run: lr::veselova3,
        },
        ScenarioInfo {
            name: "veselova_n",
            description: "reduced constrained body on the unit sphere",
            verifies: "measure density, constraints, geodesic energy after rescaling",
            run: lr::veselova_n,
        },
        ScenarioInfo {
            name: "neumann_compare",
            description: "iso-energy map onto the quadratic-potential sphere system",
            verifies: "forward/inverse trajectory correspondence with F0 = 0",
            run: lr::neumann_compare,
        },
        ScenarioInfo {
            name: "knorrer",
            description: "quadric geodesics and their normal map to the sphere",
            verifies: "mapped second-order equation residual and isospectral drift",
            run: lr::knorrer,
        },
        ScenarioInfo {
            name: "reconstruction",
            description: "group motion rebuilt from eigenframes of the isospectral matrix",
            verifies: "orthogonality, constraint pairing, kinematic residual, gauge freedom",
            run: lr::reconstruction,
        },
        ScenarioInfo {
            name: "spheroconic",
            description: "separation coordinates on the sphere",
            verifies: "resolvent round trip and hyperelliptic quadrature identities",
            run: lr::spheroconic,
        },
        ScenarioInfo {
            name: "maupertuis",
            description: "potential flow vs conformally rescaled kinetic flow",
            verifies: "iso-energy path coincidence and the multiplier ratio",
            run: lr::maupertuis,
        },
        ScenarioInfo {
            name: "lagrange_top",
            description: "symmetric body in a linear potential",
            verifies: "rescaled rotation momenta as first integrals",
            run: lr::lagrange_top,
        },
        ScenarioInfo {
            name: "lplusr_generic",
            description: "perturbed-inertia flow with a random symmetric part",
            verifies: "energy/momentum/spectrum invariants, det-measure, engine order",
            run: lplusr::lplusr_generic,
        },
        ScenarioInfo {
            name: "chaplygin_sphere",
            description: "ball rolling without sliding, body frame",
            verifies: "momentum family, carried frame, rolling measure density",
            run: lplusr::chaplygin_sphere,
        },
        ScenarioInfo {
            name: "spherical_support",
            description: "ball spinning on fixed peripheral balls",
            verifies: "assembled operator, integrals, expanded measure density",
            run: lplusr::spherical_support,
        },
        ScenarioInfo {
            name: "lplusr_limit",
            description: "stiff rank-one family against the constrained flow",
            verifies: "1/eps convergence and scaled-density limit",
            run: lplusr::lplusr_limit,
        },
    ]
}

pub fn find(name: &str) -> Option<&'static ScenarioInfo> {
    registry().iter().find(|s| s.name == name)
}
