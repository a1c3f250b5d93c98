use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::{GrayImage, RgbImage};
use mtbr_core::checkpoint::{read_checkpoint, write_checkpoint};
use mtbr_core::dataio::{
    class_names, generate_synthetic, read_dataset, split_records, write_dataset, DatasetManifest, SampleRecord, Split,
    SynthSpec,
};
use mtbr_core::dct::{
    dct_visualize, read_video, resize_bilinear, take_snippet, video_dct, write_video, Frame, RawVideo,
};
use mtbr_core::kv::KeyValues;
use mtbr_core::metrics::{classwise_csv, classwise_table};
use mtbr_core::models::{attention_report, gradcheck_miniature, MiniatureKind};
use mtbr_core::training::{evaluate, fit, RunConfig};
use mtbr_core::{Error, Network64};

use crate::Failure;

type CmdResult = Result<(), Failure>;

const GRADCHECK_H: f64 = 1e-4;
const GRADCHECK_TOL: f64 = 1e-4;

fn read_kv(path: &Path) -> Result<KeyValues, Failure> {
    Ok(KeyValues::parse(&fs::read_to_string(path)?)?)
}

fn load_checkpoint(path: &Path) -> Result<Network64, Failure> {
    Ok(read_checkpoint(BufReader::new(File::open(path)?))?)
}

fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<SampleRecord>), Failure> {
    Ok(read_dataset(BufReader::new(File::open(path)?))?)
}

pub fn pack(input_dir: &Path, output: &Path, size: Option<usize>) -> CmdResult {
    let mut paths: Vec<_> = fs::read_dir(input_dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = image::open(p)
            .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
            .to_rgb8();
        let pixels = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        let mut frame = Frame::new(img.height() as usize, img.width() as usize, 3, pixels)?;
        if let Some(s) = size {
            frame = resize_bilinear(&frame, s, s)?;
        }
        frames.push(frame);
    }
    let video = RawVideo::from_frames(&frames)?;
    write_video(&video, BufWriter::new(File::create(output)?))?;
    println!("packed {} frames of {}x{} into {}", video.frame_count, video.height, video.width, output.display());
    Ok(())
}

fn save_png(frame: &Frame<f64>, path: &Path) -> CmdResult {
    let bytes: Vec<u8> = frame.pixels().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let result = match frame.channels() {
        1 => GrayImage::from_raw(w, h, bytes).map(|img| img.save(path)),
        3 => RgbImage::from_raw(w, h, bytes).map(|img| img.save(path)),
        c => return Err(Error::Validation(format!("cannot render {c}-channel frames as PNG")).into()),
    };
    match result {
        Some(Ok(())) => Ok(()),
        Some(Err(e)) => Err(Error::Validation(format!("{}: {e}", path.display())).into()),
        None => Err(Error::Contract("frame buffer size".into()).into()),
    }
}

pub fn dct(input: &Path, output: &Path, visualize: Option<&Path>, snippet_len: usize) -> CmdResult {
    let video = read_video(BufReader::new(File::open(input)?))?;
    let snippet = take_snippet(video.to_frames::<f64>()?, snippet_len)?;
    let coefficients = video_dct(&snippet);
    write_video(&RawVideo::from_dct(&coefficients)?, BufWriter::new(File::create(output)?))?;
    if let Some(dir) = visualize {
        fs::create_dir_all(dir)?;
        for (i, d) in coefficients.iter().enumerate() {
            save_png(&dct_visualize(d), &dir.join(format!("dct_{i:04}.png")))?;
        }
    }
    println!("wrote {} DCT frames to {}", coefficients.len(), output.display());
    Ok(())
}

pub fn synth(spec: &Path, output: &Path) -> CmdResult {
    let spec = SynthSpec::from_key_values(&read_kv(spec)?)?;
    let (manifest, records) = generate_synthetic(&spec)?;
    write_dataset(&manifest, &records, BufWriter::new(File::create(output)?))?;
    println!("wrote {} samples to {}", records.len(), output.display());
    Ok(())
}

pub fn train(config: &Path) -> CmdResult {
    let run = RunConfig::from_key_values(&read_kv(config)?)?;
    let (manifest, records) = load_dataset(&run.dataset_path)?;
    let mut net: Network64 = run.model.build(&manifest, run.train.seed)?;
    fs::create_dir_all(&run.output_dir)?;

    let mut history = BufWriter::new(File::create(run.output_dir.join("history.jsonl"))?);
    let result = fit(&mut net, &records, &run.train, |report| {
        let line = serde_json::to_string(report).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(history, "{line}")?;
        history.flush()?;
        Ok(())
    })?;
    drop(history);

    let mut ckpt = BufWriter::new(File::create(run.output_dir.join("best.mtbp"))?);
    write_checkpoint(&net, &mut ckpt)?;
    ckpt.flush()?;

    let val = evaluate(&net, &split_records(&records, Split::Val))?;
    let names = class_names(manifest.n_classes);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    fs::write(run.output_dir.join("classwise.csv"), classwise_csv(&val.ap, &refs)?)?;

    println!(
        "trained {} for {} epochs, best epoch {}",
        run.model,
        result.reports.len(),
        result.best_epoch
    );
    println!("val mAP: {:.4}", val.ap.map_or_zero());
    Ok(())
}

pub fn eval(checkpoint: &Path, dataset: &Path, split: Split) -> CmdResult {
    let net = load_checkpoint(checkpoint)?;
    let (manifest, records) = load_dataset(dataset)?;
    let rows = split_records(&records, split);
    if rows.is_empty() {
        return Err(Error::EmptySplit(format!("dataset has no {split} records")).into());
    }
    let result = evaluate(&net, &rows)?;
    let names = class_names(manifest.n_classes);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    println!("{split} mAP: {:.4}", result.ap.map_or_zero());
    print!("{}", classwise_table(&result.ap, &refs)?);
    Ok(())
}

pub fn attention(checkpoint: &Path, dataset: &Path, split: Split) -> CmdResult {
    let net = load_checkpoint(checkpoint)?;
    if matches!(net, Network64::Transformer(_)) {
        return Err(Error::Validation("the transformer head has no view attention".into()).into());
    }
    let (_, records) = load_dataset(dataset)?;
    let report = attention_report(&net, &records, split)?;
    let json = serde_json::to_string(&report).map_err(|e| Error::Validation(e.to_string()))?;
    println!("{json}");
    print!("{}", report.table());
    Ok(())
}

pub fn gradcheck(model: MiniatureKind, seed: u64) -> CmdResult {
    let check = gradcheck_miniature(model, seed, GRADCHECK_H)?;
    let err = check.report.max_relative_error;
    if err < GRADCHECK_TOL {
        println!("{model} seed {seed}: max relative error {err:.3e} (worst {})", check.worst_param);
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "{model} seed {seed}: max relative error {err:.3e} at parameter {}",
            check.worst_param
        )))
    }
}
