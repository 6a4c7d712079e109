use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use reviewsense::ingest::{histogram_tsv, read_blocks};
use reviewsense::paravec;
use reviewsense::pipeline::{feature_matrix, labels, tokenize, vector_map};
use reviewsense::product_embed::{
    build_store, read_sequences_jsonl, save_store, load_store, write_sequences_jsonl, TargetSpace,
};
use reviewsense::rnn_core::gradcheck::{check_gru, check_rnn};
use reviewsense::synth::{generate, SynthConfig};
use reviewsense::{
    build_sequences, preprocess, rating_histogram, run_cv, train_product_gru, train_svm, GruModel,
    GruTrainConfig, KernelSpec, PvConfig, PvMode, PvModel, SvmConfig,
};

use crate::artifacts::{self, read_features, read_labels, read_reviews, write_features, write_labels};
use crate::service::{self, ModelBundle};

#[derive(Debug, Parser)]
#[command(name = "reviewsense", version, about = "Review sentiment and rating-mismatch pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize review text (JSON Lines or key: value blocks) into token lists.
    Preprocess(PreprocessArgs),
    /// Train paragraph vectors over a review corpus.
    TrainPv(TrainPvArgs),
    /// Infer a paragraph vector for new text.
    InferPv(InferPvArgs),
    /// Group reviews by product, ordered by review time.
    BuildSequences(BuildSequencesArgs),
    /// Train the GRU over product sequences.
    TrainGru(TrainGruArgs),
    /// Write one embedding per product sequence.
    ExportEmbeddings(ExportArgs),
    /// Assemble classifier features and labels for a corpus.
    BuildFeatures(BuildFeaturesArgs),
    /// Train the SVM classifier.
    TrainSvm(TrainSvmArgs),
    /// k-fold cross-validation of the classifier.
    Evaluate(EvaluateArgs),
    /// Run the HTTP prediction service.
    Serve(ServeArgs),
    /// Finite-difference check of the recurrent gradients.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic review corpus.
    Synth(SynthArgs),
    /// Count reviews per star rating.
    Histogram(HistogramArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, visible_alias = "in")]
    pub input: PathBuf,
    /// Input is blank-line separated `key: value` blocks instead of JSON Lines.
    #[arg(long)]
    pub from_blocks: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the parsed reviews as JSON Lines.
    #[arg(long)]
    pub reviews_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Dm,
    Dbow,
}

#[derive(Debug, Args)]
pub struct TrainPvArgs {
    /// Review corpus (JSON Lines); tokenized on the fly.
    #[arg(long, required_unless_present = "tokens", conflicts_with = "tokens")]
    pub reviews: Option<PathBuf>,
    /// Token lists written by `preprocess`.
    #[arg(long, visible_alias = "in")]
    pub tokens: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "dm")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InferPvArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Text to embed; otherwise every review of `--reviews` is embedded.
    #[arg(long, conflicts_with = "reviews")]
    pub text: Option<String>,
    #[arg(long)]
    pub reviews: Option<PathBuf>,
    /// JSON Lines output (one vector per line); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildSequencesArgs {
    /// The corpus the paragraph-vector model was trained on.
    #[arg(long)]
    pub reviews: PathBuf,
    #[arg(long)]
    pub pv_model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Ratings,
    Classes,
}

#[derive(Debug, Args)]
pub struct TrainGruArgs {
    #[arg(long)]
    pub sequences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.25)]
    pub dropout: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, value_enum, default_value = "ratings")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 256)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sequences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildFeaturesArgs {
    #[arg(long)]
    pub reviews: PathBuf,
    #[arg(long)]
    pub pv_model: PathBuf,
    /// Append product embeddings; without it the features are review vectors only.
    #[arg(long)]
    pub emb_store: Option<PathBuf>,
    #[arg(long)]
    pub features_out: PathBuf,
    #[arg(long)]
    pub labels_out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Args)]
pub struct SvmArgs {
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    /// RBF width; defaults to 1 / feature count.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

impl SvmArgs {
    fn config(&self) -> SvmConfig {
        SvmConfig {
            c: self.c,
            kernel: match self.kernel {
                KernelArg::Linear => KernelSpec::Linear,
                KernelArg::Rbf => KernelSpec::Rbf { gamma: self.gamma },
            },
            standardize: !self.no_standardize,
            tol: self.tol,
            max_iter: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainSvmArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// TSV report; printed to stdout as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "REVIEWSENSE_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "REVIEWSENSE_PV_MODEL", default_value = "pv.model")]
    pub pv_model: PathBuf,
    #[arg(long, env = "REVIEWSENSE_EMB_STORE", default_value = "products.emb")]
    pub emb_store: PathBuf,
    #[arg(long, env = "REVIEWSENSE_SVM_MODEL", default_value = "svm.model")]
    pub svm_model: PathBuf,
    /// Overrides the inference seed stored in the paragraph-vector model.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of built UI assets served at `/` when it exists.
    #[arg(long, default_value = "ui/dist")]
    pub static_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 3)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub reviews: usize,
    #[arg(long, default_value_t = 50)]
    pub products: usize,
    /// Fraction of reviews whose text carries no sentiment words.
    #[arg(long, default_value_t = 0.0)]
    pub ambiguous: f64,
    #[arg(long, default_value_t = 0.8)]
    pub product_bias: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub reviews: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::TrainPv(a) => cmd_train_pv(a),
        Command::InferPv(a) => cmd_infer_pv(a),
        Command::BuildSequences(a) => cmd_build_sequences(a),
        Command::TrainGru(a) => cmd_train_gru(a),
        Command::ExportEmbeddings(a) => cmd_export(a),
        Command::BuildFeatures(a) => cmd_build_features(a),
        Command::TrainSvm(a) => cmd_train_svm(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Histogram(a) => {
            let reviews = read_reviews(&a.reviews)?;
            print!("{}", histogram_tsv(&rating_histogram(&reviews)));
            Ok(())
        }
    }
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let reviews = if a.from_blocks {
        let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
        read_blocks(&text)?
    } else {
        read_reviews(&a.input)?
    };
    artifacts::write_tokens(&a.out, &tokenize(&reviews))?;
    if let Some(p) = &a.reviews_out {
        artifacts::write_reviews(p, &reviews)?;
    }
    eprintln!("preprocessed {} reviews", reviews.len());
    Ok(())
}

fn cmd_train_pv(a: TrainPvArgs) -> Result<()> {
    let corpus = match (&a.reviews, &a.tokens) {
        (_, Some(t)) => artifacts::read_tokens(t)?,
        (Some(r), None) => tokenize(&read_reviews(r)?),
        (None, None) => bail!("give --reviews or --tokens"),
    };
    let config = PvConfig {
        dim: a.dim,
        epochs: a.epochs,
        window: a.window,
        negatives: a.negatives,
        min_count: a.min_count,
        seed: a.seed,
        ..PvConfig::default()
    };
    let mode = match a.mode {
        ModeArg::Dm => PvMode::Dm,
        ModeArg::Dbow => PvMode::Dbow,
    };
    let fit = paravec::train(&corpus, &config, mode)?;
    for (e, loss) in fit.epoch_losses.iter().enumerate() {
        eprintln!("epoch {:>3}  loss {loss:.6}", e + 1);
    }
    fit.model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "vocabulary {} words, {} documents, dim {} -> {}",
        fit.model.vocab.len(),
        fit.model.doc_count(),
        fit.model.dim(),
        a.out.display()
    );
    Ok(())
}

fn vector_json(v: &Array1<f64>) -> String {
    serde_json::to_string(&v.to_vec()).expect("finite floats serialize")
}

fn cmd_infer_pv(a: InferPvArgs) -> Result<()> {
    let model = PvModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let texts: Vec<String> = match (&a.text, &a.reviews) {
        (Some(t), _) => vec![t.clone()],
        (None, Some(p)) => read_reviews(p)?.into_iter().map(|r| r.review_text).collect(),
        (None, None) => bail!("give --text or --reviews"),
    };
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(artifacts::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for t in texts {
        let v = model.infer_vector(&preprocess(&t))?;
        writeln!(out, "{}", vector_json(&v))?;
    }
    out.flush()?;
    Ok(())
}

fn load_pv_for_corpus(path: &Path, n: usize) -> Result<PvModel> {
    let model = PvModel::load(path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(
        model.doc_count() == n,
        "{} holds {} document vectors but the corpus has {n} reviews; train it on this corpus",
        path.display(),
        model.doc_count()
    );
    Ok(model)
}

fn cmd_build_sequences(a: BuildSequencesArgs) -> Result<()> {
    let reviews = read_reviews(&a.reviews)?;
    let pv = load_pv_for_corpus(&a.pv_model, reviews.len())?;
    let vectors: HashMap<usize, Array1<f64>> = vector_map(&pv.docs);
    let seqs = build_sequences(&reviews, &vectors)?;
    let mut w = artifacts::create(&a.out)?;
    write_sequences_jsonl(&mut w, &seqs)?;
    w.flush()?;
    eprintln!("{} product sequences from {} reviews", seqs.len(), reviews.len());
    Ok(())
}

fn read_sequences(path: &Path) -> Result<Vec<reviewsense::ProductSequence>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_sequences_jsonl(BufReader::new(f))?)
}

fn cmd_train_gru(a: TrainGruArgs) -> Result<()> {
    let seqs = read_sequences(&a.sequences)?;
    let config = GruTrainConfig {
        hidden: a.hidden,
        dropout: a.dropout,
        epochs: a.epochs,
        validation_fraction: a.validation_fraction,
        seed: a.seed,
        target_space: match a.target {
            TargetArg::Ratings => TargetSpace::Ratings5,
            TargetArg::Classes => TargetSpace::Classes3,
        },
        max_steps: a.max_steps,
        adam: reviewsense::rnn_core::AdamConfig { lr: a.lr, ..Default::default() },
    };
    let fit = train_product_gru(&seqs, &config)?;
    for (e, l) in fit.history.iter().enumerate() {
        eprintln!("epoch {:>3}  train {:.6}  validation {:.6}", e + 1, l.train, l.validation);
    }
    fit.model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("kept epoch {} -> {}", fit.best_epoch + 1, a.out.display());
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let model = GruModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let seqs = read_sequences(&a.sequences)?;
    let store = build_store(&model, &seqs)?;
    save_store(&store, &a.out)?;
    eprintln!("{} embeddings of dim {} -> {}", store.len(), store.dim(), a.out.display());
    Ok(())
}

fn cmd_build_features(a: BuildFeaturesArgs) -> Result<()> {
    let reviews = read_reviews(&a.reviews)?;
    let pv = load_pv_for_corpus(&a.pv_model, reviews.len())?;
    let store = a.emb_store.as_deref().map(load_store).transpose()?;
    let x = feature_matrix(&reviews, &pv.docs, store.as_ref())?;
    write_features(&a.features_out, &x)?;
    write_labels(&a.labels_out, &labels(&reviews))?;
    eprintln!("{} x {} features", x.nrows(), x.ncols());
    Ok(())
}

fn cmd_train_svm(a: TrainSvmArgs) -> Result<()> {
    let x = read_features(&a.features)?;
    let y = read_labels(&a.labels)?;
    let model = train_svm(&x, &y, &a.svm.config())?;
    for m in &model.machines {
        eprintln!(
            "{:>8}: {} support vectors, {} iterations",
            m.class.as_str(),
            m.coef.len(),
            m.iterations
        );
    }
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let x = read_features(&a.features)?;
    let y = read_labels(&a.labels)?;
    let report = run_cv(&x, &y, a.k, a.seed, &a.svm.config())?;
    let tsv = report.to_tsv();
    print!("{tsv}");
    if let Some(p) = &a.out {
        std::fs::write(p, &tsv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let bundle = ModelBundle::load(Some(&a.pv_model), Some(&a.emb_store), Some(&a.svm_model), a.seed)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(SocketAddr::new(a.host, a.port), bundle, Some(a.static_dir)))
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let rnn = check_rnn(a.instances, a.seed);
    let gru = check_gru(a.instances, a.steps, a.seed.wrapping_add(1));
    println!("model\tinstances\tpartials\tmax_rel_error");
    println!("rnn\t{}\t{}\t{:.3e}", rnn.instances, rnn.partials, rnn.max_rel_error);
    println!("gru\t{}\t{}\t{:.3e}", gru.instances, gru.partials, gru.max_rel_error);
    let worst = rnn.max_rel_error.max(gru.max_rel_error);
    ensure!(worst <= a.tolerance, "max relative error {worst:.3e} exceeds {:.1e}", a.tolerance);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let corpus = generate(&SynthConfig {
        reviews: a.reviews,
        products: a.products,
        ambiguous_fraction: a.ambiguous,
        product_bias: a.product_bias,
        seed: a.seed,
        ..SynthConfig::default()
    });
    artifacts::write_reviews(&a.out, &corpus.reviews)?;
    eprintln!("{} reviews over {} products -> {}", corpus.reviews.len(), a.products, a.out.display());
    Ok(())
}
