use mtbr_core::checkpoint::{read_checkpoint, write_checkpoint, MTBP_MAGIC};
use mtbr_core::dataio::{
    generate_synthetic, read_dataset, split_records, write_dataset, InformativeModality, Modality, Split, SynthSpec,
};
use mtbr_core::error::Error;
use mtbr_core::models::{EncoderConfig, FusionConfig, FusionKind, FusionNet, Model, TransformerNet};
use mtbr_core::training::{evaluate, fit, TrainConfig};
use mtbr_core::Network64;

fn fusion(kind: FusionKind, seed: u64) -> Network64 {
    let config = FusionConfig {
        feat_dim: 6,
        hidden: 5,
        n_classes: 4,
        lavila_dim: 7,
        layer_norm_eps: 1e-6,
        seed,
    };
    Network64::Fusion(FusionNet::new(kind, config).unwrap())
}

fn every_kind() -> Vec<Network64> {
    let mut nets: Vec<Network64> = [
        FusionKind::Multiview(Modality::Rgb),
        FusionKind::Multiview(Modality::Dct),
        FusionKind::Bimodal,
        FusionKind::Trimodal,
    ]
    .into_iter()
    .enumerate()
    .map(|(i, k)| fusion(k, i as u64))
    .collect();
    let config = EncoderConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 12,
        n_layers: 2,
        seq_len: 3,
        n_classes: 4,
        layer_norm_eps: 1e-5,
        positional: true,
        seed: 11,
    };
    nets.push(Network64::Transformer(TransformerNet::new(config).unwrap()));
    nets
}

fn encode(net: &Network64) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf).unwrap();
    buf
}

#[test]
fn checkpoints_round_trip_byte_identically() {
    for net in every_kind() {
        let first = encode(&net);
        assert_eq!(&first[..4], MTBP_MAGIC);
        let back: Network64 = read_checkpoint(&first[..]).unwrap();
        assert_eq!(back, net);
        assert_eq!(encode(&back), first);
    }
}

#[test]
fn every_truncation_is_a_format_error_at_the_end_offset() {
    let bytes = encode(&fusion(FusionKind::Bimodal, 0));
    for cut in (0..bytes.len()).step_by(37).chain([bytes.len() - 1]) {
        match read_checkpoint::<f64, _>(&bytes[..cut]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, cut as u64),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let good = encode(&fusion(FusionKind::Multiview(Modality::Rgb), 0));
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(read_checkpoint::<f64, _>(&bad_magic[..]), Err(Error::Format { offset: 0, .. })));

    let mut bad_kind = good.clone();
    bad_kind[5] = 9;
    assert!(matches!(read_checkpoint::<f64, _>(&bad_kind[..]), Err(Error::Format { .. })));

    let mut trailing = good.clone();
    trailing.push(0);
    assert!(matches!(read_checkpoint::<f64, _>(&trailing[..]), Err(Error::Format { .. })));

    let mut nan = good.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(read_checkpoint::<f64, _>(&nan[..]).is_err());
}

#[test]
fn trained_checkpoint_reproduces_evaluation() {
    let mut spec = SynthSpec::uniform(4, 3, 6, 2, InformativeModality::Both);
    spec.n_train = 48;
    spec.n_val = 24;
    spec.n_test = 24;
    let (manifest, records) = generate_synthetic(&spec).unwrap();

    let mut data = Vec::new();
    write_dataset(&manifest, &records, &mut data).unwrap();
    let (manifest_back, records_back) = read_dataset(&data[..]).unwrap();
    assert_eq!((manifest_back, &records_back), (manifest, &records));

    let config = FusionConfig {
        feat_dim: 6,
        hidden: 8,
        n_classes: 3,
        seed: 4,
        ..FusionConfig::default()
    };
    let mut net = Network64::Fusion(FusionNet::new(FusionKind::Bimodal, config).unwrap());
    let train = TrainConfig {
        max_epochs: 4,
        batch_size: 8,
        ..TrainConfig::default()
    };
    fit(&mut net, &records_back, &train, |_| Ok(())).unwrap();

    let restored: Network64 = read_checkpoint(&encode(&net)[..]).unwrap();
    for split in [Split::Val, Split::Test] {
        let rows = split_records(&records_back, split);
        let a = evaluate(&net, &rows).unwrap();
        let b = evaluate(&restored, &rows).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(restored.modalities(), net.modalities());
}
