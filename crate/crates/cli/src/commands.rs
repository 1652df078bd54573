use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use scatlearn::analysis::{
    angular_dft, covariance_check, epsilon_for_sparsity, normalize_view, omega_spectra, parseval_errors,
    split_first_layer, threshold_sparsify,
};
use scatlearn::container::{
    bank_to_container, model_from_container, model_to_container, scattering_to_container, Container, KIND_MODEL,
};
use scatlearn::data::{derive_seed, load_cifar10, load_ppm, parse_cifar_batch, sample_subset, LabeledImageSet};
use scatlearn::encoder::{evaluate, train, FeatureExtractor, RawPixels, ScatteringFeatures, SleModel};
use scatlearn::filterbank::{frequency, littlewood_paley, littlewood_paley_in, FilterBank};
use scatlearn::image::Image;
use scatlearn::scattering::Scattering;
use scatlearn::synthetic::{natural_images, oriented_textures};
use scatlearn::Scalar;

use crate::config::{DataSource, ExperimentConfig, FeatureKind};
use crate::error::CliError;
use crate::report::{num, opt, Report};

const TAG_SUBSET: u64 = 0x5355;
const TAG_SYNTHETIC: u64 = 0x5359;
const TAG_COVARIANCE: u64 = 0x434f;
const CLASSES: usize = 10;
const COLORS: usize = 3;
const SYNTHETIC_SIDE: usize = 32;

fn write_container(mut c: Container, config: &ExperimentConfig, path: &Path) -> Result<(), CliError> {
    c.set_meta("config", config.to_json());
    c.save(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn scattering<T: Scalar>(config: &ExperimentConfig) -> Result<Scattering<T>, CliError> {
    let bank = FilterBank::new(config.scattering.bank())?;
    Ok(Scattering::with_options(bank, config.scattering.options())?)
}

fn extractor<T: Scalar>(config: &ExperimentConfig) -> Result<Box<dyn FeatureExtractor<T>>, CliError> {
    Ok(match config.features {
        FeatureKind::Scattering => Box::new(ScatteringFeatures::new(scattering::<T>(config)?)),
        FeatureKind::Raw => Box::new(RawPixels),
    })
}

/// Train and test sets described by the data section.
pub fn load_data<T: Scalar>(config: &ExperimentConfig) -> Result<(LabeledImageSet<T>, LabeledImageSet<T>), CliError> {
    let d = &config.data;
    match d.source {
        DataSource::Synthetic => {
            let train = oriented_textures(
                d.train_per_class.unwrap_or(100),
                CLASSES,
                COLORS,
                SYNTHETIC_SIDE,
                derive_seed(config.seed, TAG_SYNTHETIC, 0, 0),
            )?;
            let test = oriented_textures(
                d.test_per_class.unwrap_or(50),
                CLASSES,
                COLORS,
                SYNTHETIC_SIDE,
                derive_seed(config.seed, TAG_SYNTHETIC, 1, 0),
            )?;
            Ok((train, test))
        }
        DataSource::Cifar10 => {
            let dir = d.cifar_dir.as_ref().ok_or_else(|| CliError::config("data.cifar_dir is unset"))?;
            let (mut train, mut test) = load_cifar10(dir)?;
            if let Some(k) = d.train_per_class {
                train = sample_subset(&train, k, derive_seed(config.seed, TAG_SUBSET, 0, 0))?;
            }
            if let Some(k) = d.test_per_class {
                test = sample_subset(&test, k, derive_seed(config.seed, TAG_SUBSET, 1, 0))?;
            }
            Ok((train, test))
        }
    }
}

pub fn filters(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let bank = FilterBank::<f64>::new(config.scattering.bank())?;
    let lp = littlewood_paley(&bank);
    let mut c = bank_to_container(&bank)?;
    c.set_meta("lp_min", json!(lp.lp_min));
    c.set_meta("lp_max", json!(lp.lp_max));
    write_container(c, config, out)?;
    println!(
        "wavelets {} lowpass 1 lp_min {:.6} lp_max {:.6}",
        bank.wavelet_count(),
        lp.lp_min,
        lp.lp_max
    );
    Ok(())
}

pub fn lp_check(config: &ExperimentConfig, lo: Option<f64>, hi: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let bank = FilterBank::<f64>::new(config.scattering.bank())?;
    let lp = match (lo, hi) {
        (None, None) => littlewood_paley(&bank),
        (lo, hi) => littlewood_paley_in(&bank, lo.unwrap_or(0.0), hi.unwrap_or(std::f64::consts::PI * 2f64.sqrt())),
    };
    println!("lp_min {:.6} lp_max {:.6}", lp.lp_min, lp.lp_max);
    if let Some(path) = out {
        let mut r = Report::new(&config.to_json(), &["row", "col", "omega_row", "omega_col", "value"]);
        let n = lp.side;
        for m in 0..n {
            for k in 0..n {
                r.row(vec![
                    m.to_string(),
                    k.to_string(),
                    num(frequency(m, n)),
                    num(frequency(k, n)),
                    num(lp.curve[m * n + k]),
                ]);
            }
        }
        r.save(path)?;
    }
    Ok(())
}

fn read_images<T: Scalar>(input: &Path, limit: Option<usize>) -> Result<Vec<Image<T>>, CliError> {
    let is_ppm = input
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let mut images = if is_ppm {
        vec![load_ppm(input)?]
    } else {
        let bytes = fs::read(input).map_err(|e| CliError::io(format!("{}: {e}", input.display())))?;
        parse_cifar_batch(&bytes)?.0
    };
    if let Some(n) = limit {
        images.truncate(n);
    }
    Ok(images)
}

pub fn transform<T: Scalar>(config: &ExperimentConfig, input: &Path, limit: Option<usize>, out: &Path) -> Result<(), CliError> {
    let images = read_images::<T>(input, limit)?;
    let sc = scattering::<T>(config)?;
    let outputs = sc.transform_batch(&images)?;
    let c = scattering_to_container(&outputs)?;
    let first = &outputs[0];
    println!(
        "{} records of {} channels on {}x{}",
        outputs.len(),
        first.channels(),
        first.rows,
        first.cols
    );
    write_container(c, config, out)
}

pub fn train_cmd<T: Scalar>(config: &ExperimentConfig, model_out: &Path, metrics_out: &Path) -> Result<(), CliError> {
    let (train_set, test_set) = load_data::<T>(config)?;
    let ex = extractor::<T>(config)?;
    let (mut model, metrics) = train(&train_set, Some(&test_set), ex.as_ref(), &config.model, &config.train)?;
    let acc = evaluate(&mut model, &test_set, ex.as_ref())?;
    let mut r = Report::new(
        &config.to_json(),
        &["epoch", "lr", "train_loss", "train_accuracy", "test_accuracy"],
    );
    for m in &metrics {
        r.row(vec![
            m.epoch.to_string(),
            num(m.lr),
            num(m.train_loss),
            num(m.train_accuracy),
            opt(m.validation_accuracy),
        ]);
    }
    r.save(metrics_out)?;
    let mut c = model_to_container(&model)?;
    c.set_meta("colors", json!(COLORS));
    c.set_meta("test_accuracy", serde_json::to_value(acc).expect("serializable"));
    write_container(c, config, model_out)?;
    println!(
        "parameters {} test top1 {:.4} top5 {}",
        model.parameter_count(),
        acc.top1,
        acc.top5.map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

/// Model and the config stored with it.
pub fn load_model<T: Scalar>(path: &Path) -> Result<(SleModel<T>, ExperimentConfig, Container), CliError> {
    let c = Container::load(path)?;
    if c.kind != KIND_MODEL {
        return Err(CliError::format(format!("{} is not a model file", path.display())));
    }
    let model = model_from_container::<T>(&c)?;
    let config: ExperimentConfig = serde_json::from_value(c.meta.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| CliError::format(format!("{}: stored config: {e}", path.display())))?;
    Ok((model, config, c))
}

pub fn eval_cmd<T: Scalar>(config: &ExperimentConfig, model_path: &Path, out: &Path) -> Result<(), CliError> {
    let (mut model, _, _) = load_model::<T>(model_path)?;
    let (_, test_set) = load_data::<T>(config)?;
    let ex = extractor::<T>(config)?;
    let acc = evaluate(&mut model, &test_set, ex.as_ref())?;
    let mut r = Report::new(&config.to_json(), &["metric", "value"]);
    r.row(vec!["count".into(), acc.count.to_string()]);
    r.row(vec!["top1".into(), num(acc.top1)]);
    r.row(vec!["top5".into(), opt(acc.top5)]);
    r.save(out)?;
    println!("top1 {:.4}", acc.top1);
    Ok(())
}

pub fn analyze<T: Scalar>(
    config: &ExperimentConfig,
    model_path: &Path,
    out_dir: &Path,
    sparsity: Option<f64>,
    evaluate_sparsified: bool,
) -> Result<(), CliError> {
    let (model, _, stored) = load_model::<T>(model_path)?;
    if config.features != FeatureKind::Scattering {
        return Err(CliError::config("analysis needs a model trained on scattering features"));
    }
    let colors = stored.meta.get("colors").and_then(Value::as_u64).unwrap_or(COLORS as u64) as usize;
    let (j, l) = (config.scattering.j, config.scattering.l);
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("{}: {e}", out_dir.display())))?;
    let cfg_json = config.to_json();

    let view = split_first_layer(&model, colors, j, l)?;
    let (unit, norms) = normalize_view(&view);
    let spectrum = angular_dft(&unit);
    let report = omega_spectra(&spectrum);
    let (p1, p2) = parseval_errors(&unit, &report);

    let mut r = Report::new(&cfg_json, &["omega1", "value"]);
    for (w, v) in report.omega1.iter().enumerate() {
        r.row(vec![w.to_string(), num(*v)]);
    }
    r.save(&out_dir.join("omega1.csv"))?;

    let mut r = Report::new(&cfg_json, &["omega1", "omega2", "value"]);
    for (i, v) in report.omega2.iter().enumerate() {
        r.row(vec![(i / l).to_string(), (i % l).to_string(), num(*v)]);
    }
    r.save(&out_dir.join("omega2.csv"))?;

    let mut r = Report::new(&cfg_json, &["order", "bin_low", "bin_high", "count"]);
    for (order, h) in [(1, &report.histogram1), (2, &report.histogram2)] {
        for (b, count) in h.counts.iter().enumerate() {
            r.row(vec![order.to_string(), num(h.edges[b]), num(h.edges[b + 1]), count.to_string()]);
        }
    }
    r.save(&out_dir.join("histogram.csv"))?;

    let mut summary = Report::new(&cfg_json, &["metric", "value"]);
    summary.row(vec!["parseval_error_omega1".into(), num(p1)]);
    summary.row(vec!["parseval_error_omega2".into(), num(p2)]);
    summary.row(vec!["low_frequency_share".into(), num(report.low_frequency_share())]);
    summary.row(vec!["uniform_share".into(), num(report.uniform_low_frequency_share())]);
    summary.row(vec!["zero_filters".into(), norms.zero_filters.len().to_string()]);

    if let Some(target) = sparsity {
        if !(0.0..=1.0).contains(&target) {
            return Err(CliError::config("--sparsity must lie in [0, 1]"));
        }
        let eps = epsilon_for_sparsity(&spectrum, target);
        let sparse = threshold_sparsify(&model, colors, j, l, eps)?;
        summary.row(vec!["epsilon".into(), num(eps)]);
        summary.row(vec!["sparsity".into(), num(sparse.sparsity)]);
        if evaluate_sparsified {
            let (_, test_set) = load_data::<T>(config)?;
            let ex = extractor::<T>(config)?;
            let before = evaluate(&mut model.clone(), &test_set, ex.as_ref())?;
            let after = evaluate(&mut sparse.model.clone(), &test_set, ex.as_ref())?;
            summary.row(vec!["top1_dense".into(), num(before.top1)]);
            summary.row(vec!["top1_sparse".into(), num(after.top1)]);
        }
        let mut c = model_to_container(&sparse.model)?;
        c.set_meta("colors", json!(colors));
        c.set_meta("sparsity", json!(sparse.sparsity));
        c.set_meta("epsilon", json!(eps));
        write_container(c, config, &out_dir.join("sparsified.bin"))?;
    }
    summary.save(&out_dir.join("summary.csv"))?;
    println!(
        "parseval {p1:.2e} {p2:.2e} low-frequency share {:.4} (uniform {:.4})",
        report.low_frequency_share(),
        report.uniform_low_frequency_share()
    );
    Ok(())
}

pub fn covariance<T: Scalar>(
    config: &ExperimentConfig,
    inputs: &[PathBuf],
    count: usize,
    quarter_turns: usize,
    out: &Path,
) -> Result<(), CliError> {
    let sc = scattering::<T>(config)?;
    let images: Vec<Image<T>> = if inputs.is_empty() {
        natural_images(count, COLORS, config.scattering.n, derive_seed(config.seed, TAG_COVARIANCE, 0, 0))?
    } else {
        inputs.iter().map(|p| load_ppm(p)).collect::<scatlearn::Result<_>>()?
    };
    let mut r = Report::new(
        &config.to_json(),
        &["image", "quarter_turns", "order0", "order1", "order2", "order2_theta1_only"],
    );
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for (i, img) in images.iter().enumerate() {
        let c = covariance_check(img, &sc, quarter_turns)?;
        worst1 = worst1.max(c.order1_error);
        worst2 = worst2.max(c.order2_error);
        r.row(vec![
            i.to_string(),
            quarter_turns.to_string(),
            num(c.order0_error),
            num(c.order1_error),
            num(c.order2_error),
            num(c.order2_theta1_only_error),
        ]);
    }
    r.save(out)?;
    println!("max relative error order1 {worst1:.3e} order2 {worst2:.3e}");
    Ok(())
}
