use scsnet::eval::{evaluate, predict_pair, EvalOptions};
use scsnet::imaging::{synth_dataset, ElasticParams, RgbImage};
use scsnet::model::{Generator, Mode, ScsNetConfig};
use scsnet::ScsError;

fn images(n: usize, size: usize) -> Vec<(String, RgbImage)> {
    synth_dataset(5, n, size)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, img)| (format!("img{i}"), img))
        .collect()
}

fn opts(mode: Mode) -> EvalOptions {
    EvalOptions {
        scale: 2.0,
        mode,
        seed: 1,
        elastic: ElasticParams::default(),
    }
}

#[test]
fn perfect_prediction_hits_psnr_sentinel_and_unit_ssim() {
    let data = images(3, 32);
    let report = evaluate(&data, &opts(Mode::Auto), |pair, _| Ok(pair.target.clone())).unwrap();
    assert_eq!(report.rows.len(), 3);
    for r in report
        .rows
        .iter()
        .map(|row| &row.report)
        .chain([&report.mean])
    {
        assert!(r.psnr.is_infinite());
        assert_eq!(r.ssim, 1.0);
    }
    assert!(report.to_text().contains("inf"));
}

#[test]
fn rows_follow_dataset_order() {
    let data = images(4, 32);
    let report = evaluate(&data, &opts(Mode::Auto), |pair, _| Ok(pair.target.clone())).unwrap();
    let names: Vec<_> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["img0", "img1", "img2", "img3"]);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next(), Some("image,psnr,ssim,cn"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn reference_is_passed_only_in_ref_mode() {
    let data = images(2, 32);
    for mode in [Mode::Auto, Mode::Ref] {
        evaluate(&data, &opts(mode), |pair, reference| {
            assert_eq!(reference.is_some(), mode == Mode::Ref);
            if let Some(r) = reference {
                assert_eq!(
                    (r.height(), r.width()),
                    (pair.source.height(), pair.source.width())
                );
            }
            Ok(pair.target.clone())
        })
        .unwrap();
    }
}

#[test]
fn references_are_seeded_per_image() {
    let data = images(2, 32);
    let collect = |seed| {
        let mut refs = Vec::new();
        let o = EvalOptions {
            seed,
            ..opts(Mode::Ref)
        };
        evaluate(&data, &o, |pair, r| {
            refs.push(r.unwrap().clone());
            Ok(pair.target.clone())
        })
        .unwrap();
        refs
    };
    let a = collect(1);
    assert_eq!(a, collect(1));
    assert_ne!(a, collect(2));
}

#[test]
fn empty_dataset_is_a_data_error() {
    let err = evaluate(&[], &opts(Mode::Auto), |pair, _| Ok(pair.target.clone())).unwrap_err();
    assert!(matches!(err, ScsError::Data(_)));
}

#[test]
fn generator_prediction_has_target_shape() {
    let gen = Generator::new(ScsNetConfig::tiny()).unwrap();
    let params = gen.init_params(0).unwrap();
    let data = images(2, 16);
    for mode in [Mode::Auto, Mode::Ref] {
        let report = evaluate(&data, &opts(mode), |pair, r| {
            let pred = predict_pair(&gen, &params, pair, r, mode)?;
            assert_eq!(
                (pred.height(), pred.width()),
                (pair.target.height(), pair.target.width())
            );
            Ok(pred)
        })
        .unwrap();
        assert!(report.mean.psnr.is_finite());
    }
}
