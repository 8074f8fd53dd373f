use ahlm_core::boundary::{localize, LcsConfig, Segment};
use ahlm_core::checkpoint::Checkpoint;
use ahlm_core::dataio::{
    generate_corpus, read_annotations, read_features, write_annotations, write_features, Corpus, FeatureSequence,
    GenSpec,
};
use ahlm_core::dfc::{train_dfc, DfcConfig, DfcModel};
use ahlm_core::efc::{train_efc, EfcConfig, EfcModel, VideoLabel};
use ahlm_core::eval::{average_precision, map_report, temporal_iou, Prediction};
use ahlm_core::TrainConfig;
use proptest::prelude::*;

fn small_spec() -> GenSpec {
    GenSpec {
        seed: 11,
        num_train: 16,
        num_test: 4,
        t_min: 60,
        t_max: 90,
        ..GenSpec::default()
    }
}

fn train_pair(corpus: &Corpus) -> (DfcModel, EfcModel) {
    let x: Vec<FeatureSequence> = corpus.train().iter().map(|v| v.features.clone()).collect();
    let y: Vec<VideoLabel> = corpus.train().iter().map(|v| v.truth.label(3).unwrap()).collect();
    let mut dfc = DfcModel::new(DfcConfig::default(), 5).unwrap();
    let tc = |epochs| TrainConfig {
        epochs,
        seed: 5,
        static_epochs: 1,
        bootstrap_epochs: 1,
        ..TrainConfig::default()
    };
    train_dfc(&mut dfc, &x, &tc(3)).unwrap();
    let mut efc = EfcModel::new(EfcConfig::default(), 5).unwrap();
    train_efc(&mut efc, &x, &y, &tc(3)).unwrap();
    (dfc, efc)
}

#[test]
fn corpus_files_round_trip() {
    let corpus = generate_corpus(&small_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for v in &corpus.videos {
        let path = dir.path().join(format!("{}.feat", v.id()));
        write_features(&path, &v.features).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.video_id, v.id());
        let bits = |s: &FeatureSequence| s.data().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&v.features));
    }
    let truth = Corpus::truth_of(&corpus.videos);
    let path = dir.path().join("annotations.csv");
    write_annotations(&path, &truth).unwrap();
    assert_eq!(read_annotations(&path).unwrap(), truth);
}

#[test]
fn trained_models_localize_valid_segments_reproducibly() {
    let corpus = generate_corpus(&small_spec()).unwrap();
    let (dfc, efc) = train_pair(&corpus);
    let (dfc2, efc2) = train_pair(&corpus);
    assert_eq!(dfc.to_checkpoint(), dfc2.to_checkpoint());
    assert_eq!(efc.to_checkpoint(), efc2.to_checkpoint());

    let cfg = LcsConfig::default();
    let mut preds = Vec::new();
    for v in corpus.test() {
        let segs = localize(&dfc, &efc, v.features.data(), &cfg).unwrap();
        assert_eq!(segs, localize(&dfc2, &efc2, v.features.data(), &cfg).unwrap());
        for w in segs.windows(2) {
            assert!(w[0].end <= w[1].start, "{:?}", w);
        }
        for s in &segs {
            assert!(s.start < s.end && s.end <= v.len());
            assert!(s.class_id < 3);
            assert!((0.0..=1.0).contains(&s.score));
        }
        preds.extend(segs.into_iter().map(|s| Prediction::new(v.id(), s)));
    }
    let report = map_report(&preds, &Corpus::truth_of(corpus.test()), &[0.1, 0.5]).unwrap();
    assert!(report.map.iter().all(|m| (0.0..=1.0).contains(m)));
}

fn segment() -> impl Strategy<Value = Segment> {
    (0usize..60, 1usize..30, 0usize..2, 0.01f64..1.0)
        .prop_map(|(s, len, c, score)| Segment::new(s, s + len, c, score).unwrap())
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in segment(), b in segment()) {
        let (x, y) = (temporal_iou(&a, &b), temporal_iou(&b, &a));
        prop_assert_eq!(x, y);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(temporal_iou(&a, &a), 1.0);
    }

    #[test]
    fn ap_ignores_uniform_score_scaling(
        truths in prop::collection::vec((0usize..10, 1usize..20, 0usize..2), 1..5),
        preds in prop::collection::vec(segment(), 0..8),
        scale in 0.1f64..10.0,
    ) {
        let mut csv = String::from("video_id,start,end,class_id\n");
        let mut at = 0;
        for (gap, len, class) in truths {
            csv.push_str(&format!("v,{},{},{class}\n", at + gap, at + gap + len));
            at += gap + len;
        }
        let truth = ahlm_core::dataio::parse_annotations(&csv, std::path::Path::new("prop")).unwrap();
        let p: Vec<Prediction> = preds.iter().map(|s| Prediction::new("v", *s)).collect();
        let scaled: Vec<Prediction> = preds
            .iter()
            .map(|s| Prediction::new("v", Segment::new(s.start, s.end, s.class_id, s.score * scale).unwrap()))
            .collect();
        for class in 0..2 {
            let a = average_precision(&p, &truth, 0.5, class);
            prop_assert_eq!(a, average_precision(&scaled, &truth, 0.5, class));
            if let Some(a) = a {
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
