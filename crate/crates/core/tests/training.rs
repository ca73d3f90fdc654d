use protolens::corpus::{parse_dataset, Mode, Vocabulary};
use protolens::metrics::report;
use protolens::model::ModelConfig;
use protolens::train::{evaluate, train, TrainConfig};

#[test]
fn single_pair_is_memorized() {
    let sets = parse_dataset("lapte\tlait\tlatte\tleche\tleite\tlacte\n", Mode::Orthographic)
        .unwrap()
        .sets;
    let vocab = Vocabulary::from_sets(&sets);
    let cfg = TrainConfig {
        max_epochs: 200,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let out = train(&sets, &[], vocab, ModelConfig::default(), cfg, |_| {}).unwrap();
    let last = out.log.last().unwrap();
    assert!(last.train_loss < 0.01, "final loss {}", last.train_loss);
    let eval = evaluate(&sets, &out.checkpoint).unwrap();
    assert_eq!(eval.predictions[0], sets[0].latin().symbols());
}

#[test]
fn evaluation_aggregates_like_hand_count() {
    // five entries with known distances 0, 0, 1, 2, 5
    let words = |s: &str| s.chars().map(protolens::corpus::Symbol).collect::<Vec<_>>();
    let pairs = vec![
        (words("lacte"), words("lacte")),
        (words("nocte"), words("nocte")),
        (words("octa"), words("octo")),
        (words("pscrium"), words("piscarium")),
        (words("x"), words("nouem")),
    ];
    let r = report(&pairs).unwrap();
    assert_eq!(r.buckets, [0.4, 0.6, 0.8, 0.8, 0.8]);
    assert!((r.average - 8.0 / 5.0).abs() < 1e-12);
    let norm = (0.0 + 0.0 + 0.25 + 2.0 / 9.0 + 1.0) / 5.0;
    assert!((r.average_normalized - norm).abs() < 1e-12);
}
