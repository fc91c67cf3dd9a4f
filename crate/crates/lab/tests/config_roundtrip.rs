use heavybrw_lab::config::*;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        -1e6..1e6f64,
        Just(0.1),
        Just(-0.0),
    ]
}

fn law() -> impl Strategy<Value = LawSpec> {
    prop_oneof![
        (finite(), proptest::option::of(finite()), proptest::option::of(finite())).prop_map(|(p, b, beta)| LawSpec::Poisson {
            p,
            ell: beta.map_or(EllSpec::One, |beta| EllSpec::LogPow { beta }),
            b
        }),
        (finite(), proptest::option::of(finite()), finite()).prop_map(|(p, b, gap_scale)| LawSpec::Cox { p, b, gap_scale }),
        proptest::collection::vec((0u64..1 << 40, finite()), 0..4)
            .prop_map(|v| LawSpec::Atoms { atoms: v.into_iter().map(|(count, prob)| AtomSpec { count, prob }).collect() }),
        finite().prop_map(|p| LawSpec::LogLattice { p }),
        proptest::collection::vec((finite(), proptest::collection::vec(finite(), 0..3)), 0..3).prop_map(|v| LawSpec::Custom {
            outcomes: v.into_iter().map(|(prob, displacements)| OutcomeSpec { prob, displacements }).collect()
        }),
    ]
}

fn r_spec() -> impl Strategy<Value = RSpec> {
    prop_oneof![
        Just(RSpec::MinOverLog),
        Just(RSpec::Sqrt),
        Just(RSpec::Log),
        finite().prop_map(|value| RSpec::Constant { value }),
        (finite(), finite()).prop_map(|(coef, exponent)| RSpec::Power { coef, exponent }),
    ]
}

fn schedule() -> impl Strategy<Value = ScheduleConfig> {
    (finite(), finite(), proptest::option::of(finite()), finite(), any::<bool>(), r_spec()).prop_map(
        |(a, t_multiplier, t_fixed, cutoff, one, r)| ScheduleConfig {
            a,
            t_multiplier,
            t_fixed,
            cutoff,
            case: if one { CaseSpec::I } else { CaseSpec::II },
            r,
        },
    )
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    (
        (
            proptest::option::of(prop_oneof![
                Just(ExperimentKind::Assumptions),
                Just(ExperimentKind::Nagaev),
                Just(ExperimentKind::Spine),
                Just(ExperimentKind::Theorem),
                Just(ExperimentKind::ErrorTerms),
                Just(ExperimentKind::DumpPopulation),
            ]),
            0..=MAX_SEED,
            1u64..=i64::MAX as u64,
            proptest::collection::vec(0u64..=i64::MAX as u64, 0..5),
            "[a-z/_.]{0,12}",
        ),
        (law(), proptest::option::of(finite()), proptest::option::of(finite())),
        proptest::option::of(schedule()),
        (
            proptest::option::of((finite(), finite()).prop_map(|(defensive, tolerance)| NagaevConfig { defensive, tolerance })),
            proptest::option::of((proptest::collection::vec(finite(), 0..4), 0u64..1000))
                .prop_map(|o| o.map(|(cutoffs, line_reps)| ErrorTermsConfig { cutoffs, line_reps })),
            proptest::option::of((finite(), 1u32..100, 1u32..100, finite()).prop_map(|(theta, generations, moment, horizon)| SpineConfig {
                generations,
                theta,
                moment_generations: moment,
                sibling_horizon: horizon,
                conditional_generations: 2,
                significance: 0.01,
            })),
            proptest::option::of((1u32..50, finite()).prop_map(|(generations, w)| PopulationConfig {
                generations,
                prune: PruneSpec::Absolute { weight: w },
                max_bytes: 1 << 20,
            })),
        ),
    )
        .prop_map(|((experiment, seed, reps, n_grid, out), (law, cap, normalize_from), schedule, (nagaev, error_terms, spine, population))| {
            RunConfig {
                experiment,
                seed,
                reps,
                n_grid,
                out,
                model: ModelConfig { law, cap, normalize_from },
                schedule,
                assumptions: None,
                nagaev,
                spine,
                theorem: None,
                error_terms,
                population,
            }
        })
}

/// `Debug` prints floats in shortest round-trip form, so equal strings mean equal bits
/// (and, unlike `==`, tell `-0.0` from `0.0`).
fn repr(cfg: &RunConfig) -> String {
    format!("{cfg:?}")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn toml_round_trip_is_bit_exact(cfg in run_config()) {
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(repr(&back), repr(&cfg));
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn negative_zero_survives() {
    let text = "seed = 1\n[model]\ncap = -0.0\n[model.law]\nkind = \"log-lattice\"\np = 3.0\n";
    let cfg = RunConfig::from_toml(text).unwrap();
    assert!(cfg.model.cap.unwrap().is_sign_negative());
    let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back.model.cap.unwrap().to_bits(), (-0.0f64).to_bits());
}
