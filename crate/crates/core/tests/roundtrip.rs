use thpi_core::data::{load_matrix, make_split, save_matrix, zero_center};
use thpi_core::itq_plus::{itq_plus_objective, itq_plus_train_with, TrainOptions};
use thpi_core::linalg::OrthonormalMatrix;
use thpi_core::model::{load_model, save_model};
use thpi_core::synth::{generate, SynthConfig};
use thpi_core::{DataMatrix, Error, MatrixFormat};

fn corpus() -> (DataMatrix, DataMatrix) {
    let data = generate(&SynthConfig {
        n_pairs: 150,
        d_target: 12,
        d_source: 10,
        latent_dim: 6,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    (data.target, data.source)
}

#[test]
fn matrix_files_round_trip_bit_exact() {
    let (t, _) = corpus();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("m.bin", MatrixFormat::ThpiBin), ("m.csv", MatrixFormat::Csv)] {
        let path = dir.path().join(name);
        save_matrix(&t, &path, format).unwrap();
        let back = load_matrix(&path, format).unwrap();
        assert!(back.values().iter().zip(t.values().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn trained_model_round_trip_preserves_objective() {
    let (t, s) = corpus();
    let split = make_split(&t, &s, 0.5, 0.1, 3).unwrap();
    let (x_t, _) = zero_center(&split.target_train).unwrap();
    let (x_sc, _) = zero_center(&split.source_corr).unwrap();
    let opts = TrainOptions {
        iters: 15,
        ..TrainOptions::default()
    };
    let (model, state) = itq_plus_train_with(&x_t, &x_sc, 6, 0.05, 3, &opts).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.thpi");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);

    let rotation = OrthonormalMatrix::new(back.rotation().clone()).unwrap();
    let recomputed = itq_plus_objective(&state.codes, &rotation, &state.privileged, &x_t, &x_sc, 0.05).unwrap();
    assert_eq!(recomputed, *state.objective_trace.last().unwrap());
}

#[test]
fn corrupt_model_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.thpi");
    std::fs::write(&path, b"THPI\x01").unwrap();
    assert!(matches!(load_model(&path), Err(Error::Version { .. })));
    std::fs::write(&path, b"THP").unwrap();
    assert!(load_model(&path).is_err());
}
