use lipobs::synth::H8Mode;
use lipobs_cli::config::{Disturbance, Method, QConfig};
use lipobs_cli::RunConfig;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

proptest! {
    #[test]
    fn serialized_config_parses_to_the_same_values(
        t in 1e-4..1.0f64,
        q in 1e-3..10.0f64,
        x0 in prop::collection::vec(finite(), 2),
        xhat0 in prop::collection::vec(finite(), 2),
        steps in 1usize..1000,
        sigma in 0.0..1.0f64,
        seed in any::<u64>(),
        gamma_d in prop::option::of(1e-4..1.0f64),
        mode in prop::sample::select(H8Mode::ALL.to_vec()),
        theorem in prop::sample::select(vec![1u8, 2, 4]),
        taylor in any::<bool>(),
        explicit in any::<bool>(),
    ) {
        let mut cfg = RunConfig::example();
        cfg.discretization.sample_time = t;
        cfg.discretization.method = if taylor { Method::Taylor2 } else { Method::Euler };
        cfg.design.q = if explicit { QConfig::Explicit(vec![q, 0.0, 0.0, q]) } else { QConfig::ScaledIdentity(q) };
        cfg.design.gamma_d = gamma_d;
        cfg.design.h8_mode = mode;
        cfg.design.theorem = theorem;
        cfg.simulate.x0 = x0;
        cfg.simulate.xhat0 = xhat0;
        cfg.simulate.steps = steps;
        cfg.simulate.disturbance = if sigma > 0.5 { Disturbance::None } else { Disturbance::Gaussian { sigma, seed } };
        cfg.validate().unwrap();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
