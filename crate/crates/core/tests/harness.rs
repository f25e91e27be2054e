use mrma_core::harness::experiment::{
    misclassification_rate, run_experiment, summarize, write_results_csv, ExperimentConfig, FixedSource,
    MethodKind, SyntheticSource, TrialData, TrialSource,
};
use mrma_core::harness::{load_dataset_csv, write_dataset_csv, Generator, Preset, SlopeSpec};
use mrma_core::rng::{child, seeded};
use mrma_core::{BasisSpec, Client, Epsilon, FeatureSpace, Label, LinearClassifier, Method, RescaleKind, RunMeta};

fn generator() -> Generator {
    Generator::new(&BasisSpec::cubic_bspline(4).unwrap(), RescaleKind::Tanh).unwrap()
}

fn small_config(epsilons: &[f64], trials: usize) -> ExperimentConfig {
    let mut mrma = Preset::Single.values().mrma;
    mrma.n_train = 200;
    mrma.n_eval = 600;
    mrma.n0 = 40;
    mrma.n1 = 40;
    mrma.b = 15;
    ExperimentConfig {
        epsilons: epsilons.iter().map(|&e| Epsilon::new(e).unwrap()).collect(),
        trials,
        test_size: 300,
        mrma,
        methods: MethodKind::ALL.to_vec(),
        seed: 99,
        jobs: 2,
        diagnostics: false,
    }
}

fn csv_bytes(config: &ExperimentConfig, source: &dyn TrialSource) -> Vec<u8> {
    let out = run_experiment(source, config).unwrap();
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &RunMeta::new("test", config.seed), &out.results).unwrap();
    buf
}

// Values from an independent brute-force simulation of the reference model
// (10^6 curves integrated on the grid).
const REFERENCE_BAYES_ACCURACY: f64 = 0.9001;
const REFERENCE_POSITIVE_RATE: f64 = 0.5078;

#[test]
fn reference_model_bayes_accuracy_and_balance() {
    let g = generator();
    let slope = SlopeSpec::reference().realize(g.grid(), &mut seeded(0)).unwrap();
    let pop = g.population(&slope).unwrap();
    let acc = pop.bayes_accuracy(200_000, &mut seeded(1)).unwrap();
    assert!((acc - REFERENCE_BAYES_ACCURACY).abs() <= 0.005, "{acc}");
    let rate = pop.positive_rate(10_000, &mut seeded(2));
    assert!((rate - REFERENCE_POSITIVE_RATE).abs() <= 0.02, "{rate}");
}

#[test]
fn functional_and_vector_paths_agree() {
    let g = generator();
    let synthetic = SyntheticSource {
        generator: g.clone(),
        slope: SlopeSpec::reference(),
    };
    let config = small_config(&[1.0, 5.0], 1);
    let data = synthetic
        .draw(config.mrma.total_clients(), config.test_size, &mut child(5, &[0]))
        .unwrap();
    let functional = FixedSource {
        space: FeatureSpace::Basis(g.basis().clone()),
        data: data.clone(),
    };
    let vector = FixedSource {
        space: FeatureSpace::Vector(4),
        data,
    };
    assert_eq!(csv_bytes(&config, &functional), csv_bytes(&config, &vector));
}

#[test]
fn repeated_run_gives_identical_csv() {
    let source = SyntheticSource {
        generator: generator(),
        slope: SlopeSpec::reference(),
    };
    let config = small_config(&[2.0], 1);
    let a = csv_bytes(&config, &source);
    assert_eq!(a, csv_bytes(&config, &source));
    let mut serial = config.clone();
    serial.jobs = 1;
    assert_eq!(a, csv_bytes(&serial, &source));
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().any(|l| l == "epsilon,trial,method,misclassification"));
}

#[test]
fn rates_are_probabilities_and_reversal_does_not_hurt() {
    let source = SyntheticSource {
        generator: generator(),
        slope: SlopeSpec::reference(),
    };
    let values = Preset::Single.values();
    let config = ExperimentConfig {
        epsilons: [0.5, 1.0, 2.0, 5.0, 10.0].iter().map(|&e| Epsilon::new(e).unwrap()).collect(),
        trials: 100,
        test_size: 300,
        mrma: values.mrma,
        methods: vec![MethodKind::Weak, MethodKind::Mr],
        seed: 5,
        jobs: 2,
        diagnostics: false,
    };
    let out = run_experiment(&source, &config).unwrap();
    assert!(out.results.iter().all(|r| (0.0..=1.0).contains(&r.misclassification)));
    let summary = summarize(&out.results);
    for pair in summary.chunks(2) {
        let (weak, mr) = (&pair[0], &pair[1]);
        assert_eq!((weak.method, mr.method), (MethodKind::Weak, MethodKind::Mr));
        assert!(mr.mean <= weak.mean + 0.02, "eps {}: mr {} weak {}", weak.epsilon, mr.mean, weak.mean);
    }
}

#[test]
fn misclassification_examples() {
    let test: Vec<Client> = (0..10)
        .map(|i| {
            let x = if i % 2 == 0 { 0.5 } else { -0.5 };
            Client::new(vec![x], Label::from_score(x))
        })
        .collect();
    let perfect = LinearClassifier::new(Method::Logistic, 0.0, vec![1.0], FeatureSpace::Vector(1)).unwrap();
    assert_eq!(misclassification_rate(&perfect, &test).unwrap(), 0.0);
    assert_eq!(misclassification_rate(&perfect.negate(), &test).unwrap(), 1.0);
    let constant = LinearClassifier::constant(Method::Logistic, Label::Positive, FeatureSpace::Vector(1));
    assert_eq!(misclassification_rate(&constant, &test).unwrap(), 0.5);
    assert!(misclassification_rate(&perfect, &[]).is_err());
}

#[test]
fn generated_dataset_round_trips_through_a_file() {
    let g = generator();
    let slope = SlopeSpec::reference().realize(g.grid(), &mut seeded(0)).unwrap();
    let pop = g.population(&slope).unwrap();
    let records: Vec<(Vec<f64>, Label)> = pop
        .draw_clients(250, &mut seeded(8))
        .into_iter()
        .map(|c| (c.features, c.label))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("generated.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    write_dataset_csv(&mut file, &records).unwrap();
    drop(file);
    let back = load_dataset_csv(&path).unwrap();
    assert_eq!(back.records, records);
    assert_eq!(back.feature_names, vec!["x1", "x2", "x3", "x4"]);
}

#[test]
fn fixed_source_returns_its_data() {
    let data = TrialData {
        clients: vec![Client::new(vec![0.1], Label::Positive)],
        test: vec![Client::new(vec![-0.1], Label::Negative)],
    };
    let src = FixedSource {
        space: FeatureSpace::Vector(1),
        data: data.clone(),
    };
    assert_eq!(src.draw(0, 0, &mut seeded(1)).unwrap(), data);
}
