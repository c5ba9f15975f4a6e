use agentspace::config::{parse_config, Format, RunConfig};
use agentspace::distances::{local_distance, ActionMetric, DistanceConfig};
use agentspace::exploration::{BonusConfig, StateHash};
use agentspace::io::{parse_process, save_json, ProcessFile};
use agentspace::metrics::{run_to_dir, PARTIAL_MARKER};
use agentspace::optimizer::{train, AgentInit, Shaping, SroParams, TrainSettings};
use agentspace::oracle::{exact_expected_reward, occupancy};
use agentspace::process::two_chamber;
use agentspace::verify::{run_suite, SuiteSize};
use agentspace::{RewardSpec, StochasticAgent};
use proptest::prelude::*;

const TV: ActionMetric = ActionMetric::TotalVariation;

fn det(actions: &[usize]) -> StochasticAgent {
    StochasticAgent::deterministic(actions, 2).unwrap()
}

#[test]
fn two_chamber_from_file() {
    let spec = RewardSpec::new(0.5).unwrap();
    let text = serde_json::to_string(&ProcessFile::from_process(&two_chamber(), &spec)).unwrap();
    let (p, spec) = parse_process(&text).unwrap();
    // Always-SWITCH collects 1 every other step: J = γ/(1 − γ²) = 2/3.
    let j = exact_expected_reward(&p, &det(&[1, 1]), &spec, 1e-12).unwrap();
    assert!((j - 2.0 / 3.0).abs() < 1e-10);
    // STAY in s0, SWITCH in s1 never leaves s0; editing s1 is invisible from it.
    let stay = det(&[0, 0]);
    let occ = occupancy(&p, &stay, &spec, 1e-12).unwrap();
    assert_eq!(occ.probs[1], 0.0);
    assert!((occ.probs[0] - 1.0).abs() < 1e-9);
    let d = local_distance(&stay, &stay, &det(&[0, 1]), &p, &spec, TV, DistanceConfig::default()).unwrap();
    assert_eq!(d.value, 0.0);
    let seen = local_distance(&det(&[1, 1]), &stay, &det(&[0, 1]), &p, &spec, TV, DistanceConfig::default()).unwrap();
    assert!(seen.value > 0.0);
}

#[test]
fn exact_and_monte_carlo_agree_through_one_entry_point() {
    let p = two_chamber();
    let spec = RewardSpec::new(0.9).unwrap();
    let v = StochasticAgent::tabular(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
    let b = StochasticAgent::uniform(2, 2);
    let exact = local_distance(&v, &v, &b, &p, &spec, TV, DistanceConfig::Exact { tol: 1e-12 }).unwrap();
    let mc = local_distance(
        &v,
        &v,
        &b,
        &p,
        &spec,
        TV,
        DistanceConfig::MonteCarlo {
            samples: 20_000,
            tol: 1e-4,
            seed: 3,
        },
    )
    .unwrap();
    assert!((exact.value - mc.value).abs() <= 4.0 * mc.std_error + mc.tail_bound);
}

#[test]
fn training_is_reproducible_in_process() {
    let p = two_chamber();
    let spec = RewardSpec::new(0.5).unwrap();
    let locus = StochasticAgent::softmax(2, 2, vec![0.0; 4], 1.0).unwrap();
    let params = SroParams {
        novelty_weight: 0.5,
        ..SroParams::default()
    };
    let settings = TrainSettings::new(params, 12, 9);
    let collect = || {
        let mut records = Vec::new();
        let report = train(&p, &spec, locus.clone(), &settings, |r| {
            records.push(r.clone());
            Ok(())
        })
        .unwrap();
        (records, report)
    };
    let (ra, a) = collect();
    let (rb, b) = collect();
    assert_eq!(ra, rb);
    assert_eq!(a.final_locus, b.final_locus);
    assert_eq!(a.archive.len(), 12);
    assert!(ra.iter().all(|r| r.novelty.is_some()));
}

#[test]
fn run_directory_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    save_json(
        &tmp.path().join("p.json"),
        &ProcessFile::from_process(&two_chamber(), &RewardSpec::new(0.5).unwrap()),
    )
    .unwrap();
    let config = RunConfig {
        process: "p.json".into(),
        epochs: 3,
        bonus: Some(BonusConfig::Hash {
            kappa: 0.01,
            hash: StateHash::Identity,
        }),
        ..RunConfig::default()
    };
    let run = config.resolve(tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let (report, files) = run_to_dir(&run, &out, false).unwrap();
    assert_eq!(report.epochs, 3);
    assert!(!out.join(PARTIAL_MARKER).exists());
    assert!(files.csv.is_none());
    let lines = std::fs::read_to_string(files.metrics).unwrap();
    assert_eq!(lines.lines().count(), 5);
}

#[test]
fn quick_suite_seeds_are_independent() {
    let a = run_suite(1, &["tvd-bound".into()], &SuiteSize::quick()).unwrap();
    let b = run_suite(2, &["tvd-bound".into()], &SuiteSize::quick()).unwrap();
    assert!(a.passed && b.passed);
    assert_ne!(a.checks[0].seed, b.checks[0].seed);
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let agent = prop_oneof![
        Just(AgentInit::Zero),
        (0.0f64..3.0).prop_map(|scale| AgentInit::Gaussian { scale }),
        "[a-z]{1,8}\\.json".prop_map(|p| AgentInit::File { path: p.into() }),
    ];
    let bonus = prop_oneof![
        Just(None),
        (0.0f64..1.0).prop_map(|kappa| Some(BonusConfig::Entropy { kappa })),
        (0.0f64..1.0, 1u64..9).prop_map(|(kappa, buckets)| Some(BonusConfig::Hash {
            kappa,
            hash: StateHash::Modulo { buckets }
        })),
        (0.0f64..1.0, 0.01f64..=1.0).prop_map(|(kappa, decay)| Some(BonusConfig::Dynamics { kappa, decay })),
    ];
    let optimizer = (1usize..64, 0.01f64..2.0, 0.01f64..5.0, 0.0f64..5.0, 1usize..100, 1usize..10, any::<bool>(), 0.0f64..0.1)
        .prop_map(|(half, sigma, alpha, lambda, zeta, k, ranked, wd)| SroParams {
            batch_size: 2 * half,
            noise_scale: sigma,
            learning_rate: alpha,
            novelty_weight: lambda,
            zeta_size: zeta,
            k_nearest: k,
            shaping: if ranked { Shaping::Ranked } else { Shaping::Raw },
            weight_decay: wd,
            ..SroParams::default()
        });
    (
        "[a-z]{1,8}\\.json",
        prop::option::of(0.01f64..0.99),
        0u64..(1 << 62),
        0u64..1000,
        agent,
        optimizer,
        bonus,
        prop::option::of("[a-z]{1,6}"),
    )
        .prop_map(|(process, gamma, seed, epochs, agent, optimizer, bonus, output)| RunConfig {
            process: process.into(),
            gamma,
            seed,
            epochs,
            agent,
            optimizer,
            bonus,
            output: output.map(Into::into),
            ..RunConfig::default()
        })
}

proptest! {
    #[test]
    fn config_emit_parse_is_identity(config in arb_config()) {
        prop_assert_eq!(&parse_config(&config.to_toml().unwrap(), Format::Toml).unwrap(), &config);
        prop_assert_eq!(&parse_config(&config.to_json().unwrap(), Format::Json).unwrap(), &config);
    }
}
