use annoseg::augment::{Inception, InceptionSamplerConfig, RandomCrop};
use annoseg::eval::{accumulate_confusion, mean_iou, Evaluator};
use annoseg::fcn::{read_checkpoint, train, write_checkpoint, Fcn8sParams, NetworkConfig, SgdConfig, TrainConfig, TrainPage};
use annoseg::imaging::BinarizeParams;
use annoseg::infer::{argmax_labels, predict_tiled, FcnModel, InferenceConfig};
use annoseg::page_gt::{decode_label_png, encode_label_png, parse_page_xml, rasterize_gt, LabelMap, AMBIGUOUS, ANNOTATION, BACKGROUND};
use annoseg::synth::{generate_pages, to_page_xml, SynthConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_synth() -> SynthConfig {
    SynthConfig {
        height: 512,
        width: 640,
        seed: 5,
        ..SynthConfig::default()
    }
}

fn tiny_net() -> NetworkConfig {
    NetworkConfig::with_widths(&[2, 3, 3, 4, 4], 1)
}

#[test]
fn synthetic_pages_survive_xml_and_png_roundtrips() {
    let pages = generate_pages(&small_synth(), 0..3).unwrap();
    for page in &pages {
        let xml = to_page_xml(&page.ground_truth, "p.png");
        let parsed = parse_page_xml(xml.as_bytes()).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.ground_truth, page.ground_truth);
        let labels = rasterize_gt(&page.image, &parsed.ground_truth, BinarizeParams::default()).unwrap();
        assert_eq!(labels, page.labels);
        let back = decode_label_png(&encode_label_png(&labels)).unwrap();
        assert_eq!(back, labels);
        assert!(labels.count(ANNOTATION) > 0);
    }
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let pages = generate_pages(&small_synth(), 0..2).unwrap();
    let mut ev = Evaluator::new(2);
    for p in &pages {
        // predictions never carry the ambiguous label; it is ignored anyway
        let pred: Vec<u8> = p.labels.labels().iter().map(|&l| if l == AMBIGUOUS { BACKGROUND } else { l }).collect();
        let pred = LabelMap::new(p.labels.height(), p.labels.width(), pred).unwrap();
        assert_eq!(mean_iou(&accumulate_confusion(&pred, &p.labels).unwrap()), 1.0);
        ev.add_page(&pred, &p.labels).unwrap();
    }
    assert_eq!(ev.report(Default::default()).mean_iou, 1.0);
}

fn train_tiny(seed: u64) -> (Fcn8sParams<f32>, Vec<f64>, Vec<TrainPage>) {
    let pages: Vec<TrainPage> = generate_pages(&small_synth(), 0..2)
        .unwrap()
        .into_iter()
        .map(|p| TrainPage {
            image: p.image,
            labels: p.labels,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Fcn8sParams::<f32>::init(&tiny_net(), &mut rng).unwrap();
    let sampler = Inception(InceptionSamplerConfig {
        out_size: 64,
        ..InceptionSamplerConfig::default()
    });
    let cfg = TrainConfig {
        sgd: SgdConfig { lr: 0.05, momentum: 0.9 },
        steps: 3,
        batch_size: 2,
    };
    let (params, losses) = train(params, &pages, &sampler, cfg, &mut rng).unwrap();
    (params, losses, pages)
}

#[test]
fn training_is_reproducible_and_checkpoints_roundtrip() {
    let (a, la, pages) = train_tiny(8);
    let (b, lb, _) = train_tiny(8);
    assert_eq!(la.iter().map(|l| l.to_bits()).collect::<Vec<_>>(), lb.iter().map(|l| l.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
    assert!(la.iter().all(|l| l.is_finite()));

    let mut bytes = Vec::new();
    write_checkpoint(&a, &mut bytes).unwrap();
    let restored: Fcn8sParams<f32> = read_checkpoint(bytes.as_slice()).unwrap();
    assert_eq!(restored, a);

    let cfg = InferenceConfig::default();
    let p1 = predict_tiled(&FcnModel { params: a }, &pages[0].image, &cfg).unwrap();
    let p2 = predict_tiled(&FcnModel { params: restored }, &pages[0].image, &cfg).unwrap();
    assert_eq!(p1, p2);
    let labels = argmax_labels(&p1);
    assert_eq!((labels.height(), labels.width()), (512, 640));
}

#[test]
fn random_crop_sampler_trains_too() {
    let pages: Vec<TrainPage> = generate_pages(&small_synth(), 0..1)
        .unwrap()
        .into_iter()
        .map(|p| TrainPage {
            image: p.image,
            labels: p.labels,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = Fcn8sParams::<f32>::init(&tiny_net(), &mut rng).unwrap();
    let cfg = TrainConfig {
        sgd: SgdConfig { lr: 0.05, momentum: 0.9 },
        steps: 2,
        batch_size: 1,
    };
    let (_, losses) = train(params, &pages, &RandomCrop { size: 96 }, cfg, &mut rng).unwrap();
    assert_eq!(losses.len(), 2);
}
