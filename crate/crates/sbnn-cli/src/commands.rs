use clap::{Args, Subcommand};
use sbnn::codecs::Codec;
use sbnn::container;
use sbnn::data::{load_mnist, Dataset};
use sbnn::design::{self, TopologySpec};
use sbnn::error::{Result, SbnnError};
use sbnn::infer::{self, PreparedModel};
use sbnn::model::ModelMetadata;
use sbnn::train::{
    export_sbnn, read_latent_file, write_latent_file, LatentCheckpoint, LatentModel, TrainConfig,
    Trainer,
};
use std::path::PathBuf;

#[derive(Subcommand)]
pub enum Command {
    /// Train a model and export it to the container format.
    Train(TrainArgs),
    /// Re-encode an exported model and report sizes and compression rates.
    Compress(CompressArgs),
    /// Predict compression-rate bounds for a topology, no model needed.
    Bounds(BoundsArgs),
    /// Evaluate a model on the test split with the fused engine.
    Eval(EvalArgs),
    /// Per-layer binary-op counts and fused-inference throughput.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// 2l-mlp, 3l-mlp, smoke, or a dash-separated chain like 784-256-256-10
    #[arg(long, default_value = "2l-mlp")]
    topology: String,
    /// Target fraction of one-valued weights in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    ec: f32,
    /// Fraction of the total loss assigned to the sparsity penalty, in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    gamma: f32,
    #[arg(long, default_value_t = 40)]
    epochs: u32,
    #[arg(long, default_value_t = 0.01)]
    lr: f32,
    #[arg(long, default_value_t = 0.1)]
    lr_decay_factor: f32,
    #[arg(long, default_value_t = 15)]
    lr_decay_every: u32,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dataset directory (defaults to $SBNN_DATA_DIR, then data/mnist)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "runs/latest")]
    out_dir: PathBuf,
    /// Resume from <out-dir>/latent.sblt if present
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    model: PathBuf,
    /// ne, ie, rle, he, or all (compare without writing)
    #[arg(long, default_value = "all")]
    codec: String,
    /// Output container path (single-codec mode)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as key=value lines
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
pub struct BoundsArgs {
    #[arg(long, default_value = "2l-mlp")]
    topology: String,
    #[arg(long)]
    ec: f64,
    /// Write the bound report as key=value lines
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Latent checkpoint; when given, the full-precision reference path is
    /// run and must agree with the fused engine
    #[arg(long)]
    latent: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    /// Inputs for the throughput measurement
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn parse_topology(name: &str) -> Result<Vec<usize>> {
    match name {
        "2l-mlp" => Ok(vec![784, 1024, 1024, 10]),
        "3l-mlp" => Ok(vec![784, 1024, 1024, 1024, 10]),
        "smoke" => Ok(vec![784, 256, 256, 10]),
        other => {
            let chain: std::result::Result<Vec<usize>, _> =
                other.split('-').map(|s| s.parse::<usize>()).collect();
            match chain {
                Ok(c) if c.len() >= 2 && c.iter().all(|&d| d > 0) => Ok(c),
                _ => Err(SbnnError::Config(format!(
                    "unknown topology '{other}' (expected 2l-mlp, 3l-mlp, smoke, or e.g. 784-256-256-10)"
                ))),
            }
        }
    }
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SBNN_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

fn topology_of_model(model: &sbnn::SbnnModel) -> TopologySpec {
    let mut chain = vec![model.input_dim()];
    chain.extend(model.layers().iter().map(|l| l.out_dim()));
    TopologySpec::mlp(&chain).expect("model topology")
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let chain = parse_topology(&a.topology)?;
    let cfg = TrainConfig {
        target_ec: a.ec,
        gamma: a.gamma,
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        lr_decay_factor: a.lr_decay_factor,
        lr_decay_every: a.lr_decay_every,
        adamax: Default::default(),
        seed: a.seed,
    };
    cfg.validate()?;

    let dir = data_dir(a.data_dir);
    let (train_ds, test_ds) = load_mnist(&dir)?;
    std::fs::create_dir_all(&a.out_dir)?;

    let latent_path = a.out_dir.join("latent.sblt");
    let (model, epochs_done) = if a.resume && latent_path.exists() {
        let ckpt = read_latent_file(&latent_path)?;
        eprintln!("resuming after {} epochs", ckpt.epochs_done);
        (ckpt.model, ckpt.epochs_done)
    } else {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);
        (LatentModel::new_mlp(&chain, &mut rng)?, 0)
    };

    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(model, cfg)?;
    trainer.set_epochs_done(epochs_done);
    let mut log = String::new();
    for epoch in epochs_done..cfg.epochs {
        let stats = trainer.train_epoch(&train_ds)?;
        let line = format!(
            "epoch={} lr={:.5} task_loss={:.4} total_loss={:.4} ones_fraction={:.4} lambda={:.3}",
            epoch,
            stats.lr,
            stats.mean_task_loss,
            stats.mean_total_loss,
            stats.ones_fraction,
            stats.last_lambda
        );
        eprintln!("{line}");
        log.push_str(&line);
        log.push('\n');
        write_latent_file(
            &LatentCheckpoint {
                model: trainer.model.clone(),
                target_ec: cfg.target_ec,
                gamma: cfg.gamma,
                epochs_done: epoch + 1,
                seed: cfg.seed,
            },
            &latent_path,
        )?;
    }
    let wall = t0.elapsed().as_secs_f64();

    let metadata = ModelMetadata {
        target_ec: cfg.target_ec,
        gamma: cfg.gamma,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    let exported = export_sbnn(&trainer.model, metadata)?;
    let model_path = a.out_dir.join("model.sbnn");
    container::write_model_file(&exported, Codec::Ne, &model_path)?;

    let prepared = PreparedModel::new(&exported);
    let accuracy = prepared.accuracy(&test_ds.images, &test_ds.labels, test_ds.dim)?;
    let achieved_ec = exported.achieved_ec();
    let report = design::validate_bounds(&topology_of_model(&exported), &exported)?;

    let mut manifest = String::new();
    manifest.push_str(&format!("topology={}\n", a.topology));
    manifest.push_str(&format!("target_ec={}\n", cfg.target_ec));
    manifest.push_str(&format!("gamma={}\n", cfg.gamma));
    manifest.push_str(&format!("epochs={}\n", cfg.epochs));
    manifest.push_str(&format!("batch={}\n", cfg.batch_size));
    manifest.push_str(&format!("lr={}\n", cfg.lr));
    manifest.push_str(&format!("lr_decay_factor={}\n", cfg.lr_decay_factor));
    manifest.push_str(&format!("lr_decay_every={}\n", cfg.lr_decay_every));
    manifest.push_str(&format!("seed={}\n", cfg.seed));
    manifest.push_str(&format!("achieved_ec={achieved_ec}\n"));
    manifest.push_str(&format!("accuracy={accuracy}\n"));
    manifest.push_str(&format!("wall_time_s={wall:.1}\n"));
    manifest.push_str(&report.to_kv());
    std::fs::write(a.out_dir.join("manifest.txt"), &manifest)?;
    std::fs::write(a.out_dir.join("train_log.txt"), &log)?;

    println!("test accuracy: {:.4}", accuracy);
    println!("achieved EC:   {:.4}", achieved_ec);
    println!("{}", report.table());
    println!("model:    {}", model_path.display());
    println!("manifest: {}", a.out_dir.join("manifest.txt").display());
    Ok(())
}

fn cmd_compress(a: CompressArgs) -> Result<()> {
    let model = container::read_model_file(&a.model)?;
    let topo = topology_of_model(&model);
    let report = design::validate_bounds(&topo, &model)?;

    if a.codec == "all" {
        println!("{}", report.table());
    } else {
        let codec: Codec = a.codec.parse()?;
        let m = &report.measured[&codec];
        println!(
            "{}: {} bits ({:.1} kB), CR {:.1}",
            codec.name(),
            m.size_bits,
            m.size_bits as f64 / 8192.0,
            m.cr
        );
        if let Some(out) = &a.out {
            container::write_model_file(&model, codec, out)?;
            println!("wrote {}", out.display());
        }
    }
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_kv())?;
    }
    Ok(())
}

fn cmd_bounds(a: BoundsArgs) -> Result<()> {
    let chain = parse_topology(&a.topology)?;
    let topo = TopologySpec::mlp(&chain)?;
    let fp_bits = design::fp_model_size_bits(&topo);
    let ie = design::bound_ie_bits(&topo, a.ec)?;
    let ie_cr = design::cr_from_size(&topo, ie);
    println!("topology {} at EC {}", a.topology, a.ec);
    println!("full-precision size: {:.2} MiB", fp_bits as f64 / 8.0 / 1024.0 / 1024.0);
    println!("IE  bound: {ie} bits ({:.1} kB), CR {ie_cr:.1}", ie as f64 / 8192.0);
    let mut kv = format!(
        "ec={}\nfp_bits={fp_bits}\nbound_ie_bits={ie}\nbound_ie_cr={ie_cr}\n",
        a.ec
    );
    let rle = design::bound_rle_bits(&topo, a.ec)?;
    let rle_cr = design::cr_from_size(&topo, rle);
    let proof = design::bound_rle_bits_proof(&topo, a.ec)?;
    println!("RLE bound: {rle} bits ({:.1} kB), CR {rle_cr:.1}", rle as f64 / 8192.0);
    println!("RLE bound (pigeonhole denominator): {proof} bits");
    kv.push_str(&format!(
        "bound_rle_bits={rle}\nbound_rle_cr={rle_cr}\nbound_rle_proof_bits={proof}\n"
    ));
    if let Some(path) = &a.out {
        std::fs::write(path, kv)?;
    }
    Ok(())
}

fn confusion(model: &PreparedModel, ds: &Dataset) -> Result<(f64, Vec<Vec<usize>>)> {
    let k = ds.n_classes;
    let mut matrix = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for i in 0..ds.len() {
        let scores = model.forward(ds.image(i))?;
        let pred = infer::argmax(&scores);
        let truth = ds.labels[i] as usize;
        matrix[truth][pred] += 1;
        correct += usize::from(pred == truth);
    }
    Ok((correct as f64 / ds.len() as f64, matrix))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = container::read_model_file(&a.model)?;
    let dir = data_dir(a.data_dir);
    let (_, test_ds) = load_mnist(&dir)?;
    if test_ds.dim != model.input_dim() {
        return Err(SbnnError::Size(format!(
            "dataset dim {} vs model input {}",
            test_ds.dim,
            model.input_dim()
        )));
    }
    let prepared = PreparedModel::new(&model);
    let (accuracy, matrix) = confusion(&prepared, &test_ds)?;
    println!("fused test accuracy: {accuracy:.4}");
    println!("confusion (rows = truth):");
    for row in &matrix {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        println!("  {}", line.join(" "));
    }

    // float-route self-check on a sample of inputs
    let stride = (test_ds.len() / 512).max(1);
    for i in (0..test_ds.len()).step_by(stride) {
        let fused = prepared.forward_trace(test_ds.image(i))?;
        let float = infer::forward_float_check(&model, test_ds.image(i))?;
        if fused.hidden != float.hidden
            || infer::argmax(&fused.scores) != infer::argmax(&float.scores)
        {
            return Err(SbnnError::Numeric(format!(
                "fused and float routes disagree on sample {i}"
            )));
        }
    }
    println!("float-route agreement: ok");

    if let Some(latent_path) = &a.latent {
        let ckpt = read_latent_file(latent_path)?;
        let mut mism = 0usize;
        for i in 0..test_ds.len() {
            let fused = prepared.forward_trace(test_ds.image(i))?;
            let (hidden, scores) = ckpt.model.reference_forward(test_ds.image(i));
            if fused.hidden != hidden || infer::argmax(&fused.scores) != infer::argmax(&scores) {
                mism += 1;
            }
        }
        if mism > 0 {
            return Err(SbnnError::Numeric(format!(
                "fused path disagrees with the reference path on {mism} samples"
            )));
        }
        println!("reference-path agreement: ok (0 mismatches over {})", test_ds.len());
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = container::read_model_file(&a.model)?;
    let counts = infer::count_binary_ops(&model);
    println!("layer   ones        q_ops   sbnn_ops     bnn_ops    gain");
    for (i, c) in counts.iter().enumerate() {
        println!(
            "{:<7} {:<11} {:<7} {:<12} {:<11} {:.1}x",
            i, c.popcount_ops, c.q_ops, c.sbnn_ops, c.bnn_ops, c.gain
        );
    }
    let total_sbnn: u64 = counts.iter().map(|c| c.sbnn_ops).sum();
    let total_bnn: u64 = counts.iter().map(|c| c.bnn_ops).sum();
    println!("total gain: {:.1}x", total_bnn as f64 / total_sbnn as f64);

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
    let dim = model.input_dim();
    let inputs: Vec<f32> = (0..a.samples * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let prepared = PreparedModel::new(&model);
    let t0 = std::time::Instant::now();
    let mut sink = 0.0f64;
    for i in 0..a.samples {
        let scores = prepared.forward(&inputs[i * dim..(i + 1) * dim])?;
        sink += scores[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "fused throughput: {:.0} samples/s over {} samples (checksum {sink:.3})",
        a.samples as f64 / dt,
        a.samples
    );
    Ok(())
}
