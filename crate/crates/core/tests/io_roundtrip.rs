use proptest::prelude::*;

use kdlandmark::io::{
    dataset_from_json, dataset_to_json, errors_csv, load_checkpoint, load_shape_model, parse_errors_csv,
    parse_pts, save_checkpoint, save_shape_model, write_pts, Checkpoint, PtsFile,
};
use kdlandmark::metrics::ErrorList;
use kdlandmark::pipeline::{generate_synthetic, prepare_soft_labels, Dataset, SyntheticSpec};
use kdlandmark::regressor::Regressor;
use kdlandmark::{Activation, MlpSpec};

proptest! {
    #[test]
    fn pts_round_trip(points in prop::collection::vec((-1e4..1e4_f64, -1e4..1e4_f64), 1..80)) {
        let pts = PtsFile {
            version: 1,
            points: points.into_iter().map(|(x, y)| [x, y]).collect(),
        };
        prop_assert_eq!(parse_pts(&write_pts(&pts)).unwrap(), pts);
    }

    #[test]
    fn errors_csv_round_trip(values in prop::collection::vec(0.0..10.0_f64, 1..50)) {
        let errors = ErrorList::new(values).unwrap();
        prop_assert_eq!(parse_errors_csv(&errors_csv(&errors).unwrap()).unwrap(), errors);
    }

    #[test]
    fn dataset_json_round_trip(seed in any::<u64>(), occlusion in 0.0..0.5_f64) {
        let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec {
            k: 4,
            n_train: 12,
            n_test: 5,
            latent_modes: 2,
            noise_sigma: 0.05,
            occlusion_fraction: occlusion,
            seed,
        })
        .unwrap();
        let (ds, _) = prepare_soft_labels(&ds, 0.5).unwrap();
        let text = dataset_to_json(&ds).unwrap();
        prop_assert_eq!(dataset_from_json::<f64>(&text).unwrap(), ds);
    }
}

#[test]
fn model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec {
        k: 5,
        n_train: 40,
        n_test: 10,
        latent_modes: 3,
        noise_sigma: 0.02,
        occlusion_fraction: 0.1,
        seed: 9,
    })
    .unwrap();
    let (_, shape_model) = prepare_soft_labels(&ds, 0.9).unwrap();
    let path = dir.path().join("asm.json");
    save_shape_model(&shape_model, &path).unwrap();
    assert_eq!(load_shape_model::<f64>(&path).unwrap(), shape_model);

    let model = Regressor::<f64>::new(MlpSpec::new(10, vec![7, 5], 10, Activation::Tanh, 4)).unwrap();
    let ckpt = Checkpoint {
        model,
        adam_state: None,
    };
    let path = dir.path().join("net.json");
    save_checkpoint(&ckpt, &path).unwrap();
    assert_eq!(load_checkpoint::<f64>(&path).unwrap(), ckpt);
}
