use unlearnrec::config::parse_config;
use unlearnrec::graph::synthetic::{power_law_graph, SyntheticSpec};
use unlearnrec::numerics::seeded_rng;
use unlearnrec::pipeline::protocol::{prepare_attack, retrain_and_evaluate, split_dataset, unlearn_and_evaluate};
use unlearnrec::pipeline::train_backbone;

#[test]
fn attack_unlearn_retrain_on_a_small_graph() {
    let overrides: Vec<String> = [
        "dim=16",
        "batch_size=256",
        "backbone_epochs=20",
        "lr_backbone=0.01",
        "pretrain_rounds=1",
        "pretrain_epochs=2",
        "finetune_epochs=3",
        "lr_finetune=0.01",
        "attack_ratio=2",
    ]
    .map(String::from)
    .to_vec();
    let cfg = parse_config(None, &overrides).unwrap();
    let spec = SyntheticSpec { n_users: 150, n_items: 120, target_edges: 2500, ..SyntheticSpec::default() };
    let data = split_dataset(&cfg, power_law_graph(&spec, &mut seeded_rng(cfg.seed))).unwrap();
    assert_eq!(data.train.n_edges() + data.test.len(), data.full.n_edges());

    let clean = train_backbone(&cfg.backbone, &data.train, &cfg.train_options()).unwrap();
    let setup = prepare_attack(&cfg, &data, &clean).unwrap();
    assert_eq!(setup.adversarial.len(), cfg.attack_count(data.train.n_edges()));
    assert_eq!(setup.negatives.len(), setup.adversarial.len());
    for e in &setup.negatives {
        assert!(!setup.attacked.contains(*e) && !data.full.contains(*e));
    }

    let before = setup.evaluate(&cfg, &data, &setup.model, true).unwrap();
    assert_eq!(before.mi_bf, 1.0);
    assert!(before.unlearned_mean_sigmoid > before.negative_mean_sigmoid);

    let (_, retrain) = retrain_and_evaluate(&cfg, &data, &setup).unwrap();
    assert!(retrain.unlearned_mean_sigmoid < retrain.negative_mean_sigmoid);
    assert!(retrain.mi_ng > 1.0 && retrain.mi_bf > 1.0);

    let outcome = unlearn_and_evaluate(&cfg, &data, &setup).unwrap();
    assert_eq!(outcome.pretrain_log.len(), 1);
    assert!(outcome.report.mi_bf > outcome.report0.mi_bf);
    assert!(outcome.report.unlearned_mean_sigmoid < before.unlearned_mean_sigmoid);
}
