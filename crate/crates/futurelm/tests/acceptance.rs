//! Acceptance gate: nine end-to-end criteria covering gradients,
//! bias reductions, directional perplexity orderings on the drift corpus,
//! trend detection, leakage, metric oracles, the training loop, and
//! pipeline determinism. Each test prints one PASS/FAIL line.

use futurelm::bias::encoder::{FineTuneConfig, FineTunedEncoders};
use futurelm::bias::{
    attach, build_year_embeddings, AlphaMode, BiasHead, ContextualBiasHead, FrequencyBiasHead,
    GatedBiasHead, HeadResources, YearWordEmbeddings,
};
use futurelm::corpus::{
    frequency_table, split_by_year, Document, FrequencyTable, StopwordList, TemporalCorpus,
    Vocabulary,
};
use futurelm::lm::model::TOK_EMB;
use futurelm::lm::{
    generate, next_token_dist, train, Bias, BiasProvider, DecodeMode,
    DecoderConfig, DecodingConfig, TrainConfig, ZeroBias,
};
use futurelm::metrics::{content_meteor, content_perplexity, meteor, perplexity, ContentMeteorConfig};
use futurelm::numerics::adam::{AdamConfig, AdamState};
use futurelm::numerics::{grad_check, Tape, Tensor};
use futurelm::synth::{generate_drift_corpus, DriftSpec, Trajectory, TrendLabels, WordDrift};
use futurelm::lm::DecoderLM;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::sync::OnceLock;

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion} failed: {detail}");
}

fn frame(tokens: &[u32], max_len: usize) -> (Vec<u32>, Vec<u32>) {
    let keep = tokens.len().min(max_len - 1);
    let mut input = vec![Vocabulary::EOS_ID];
    input.extend_from_slice(&tokens[..keep]);
    let mut targets = tokens[..keep].to_vec();
    targets.push(Vocabulary::EOS_ID);
    (input, targets)
}

// ---------------------------------------------------------------------
// Small fixture shared by the gradient, reduction, and leakage criteria:
// a 4-year corpus over a tiny vocabulary, so a bias for year 5 has full
// window history.

struct SmallFixture {
    model: DecoderLM,
    corpus: TemporalCorpus,
    freq: FrequencyTable,
    emb: YearWordEmbeddings,
}

fn small_fixture(d_model: usize, layers: usize, seed: u64) -> SmallFixture {
    let vocab = Vocabulary::from_words(
        ["</s>", "<unk>", "alpha", "beta", "gamma", "delta"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let texts = [
        (1, "alpha beta alpha gamma"),
        (1, "delta gamma beta"),
        (2, "beta beta gamma alpha"),
        (2, "alpha delta"),
        (3, "gamma gamma delta alpha beta"),
        (3, "beta alpha"),
        (4, "delta delta gamma beta alpha"),
        (4, "alpha gamma beta"),
    ];
    let mut corpus = TemporalCorpus::from_documents(
        texts
            .iter()
            .map(|&(year, t)| Document {
                year,
                tokens: Vec::new(),
                raw_text: t.into(),
            })
            .collect(),
    );
    corpus.retokenize(&vocab);
    let freq = frequency_table(&corpus).unwrap();
    let cfg = DecoderConfig {
        layers,
        heads: 4,
        d_model,
        d_ff: 2 * d_model,
        max_len: 8,
        dropout: 0.0,
        vocab_size: vocab.size(),
    };
    let model = DecoderLM::new(cfg, seed).unwrap();
    let enc = FineTunedEncoders::from_single(model.clone());
    let emb = build_year_embeddings(&corpus, &enc, &[1, 2, 3, 4]).unwrap();
    SmallFixture {
        model,
        corpus,
        freq,
        emb,
    }
}

// ---------------------------------------------------------------------
// Criterion 1: finite-difference gradients through the biased softmax.

#[test]
fn criterion_1_gradients_through_biased_softmax() {
    let start = std::time::Instant::now();
    let tokens = [2u32, 3, 4, 5, 2];
    let mut worst = 0.0f64;

    for head in [
        None,
        Some(BiasHead::Frequency(FrequencyBiasHead {
            window: 2,
            hidden: 8,
            fallback: false,
        })),
        Some(BiasHead::Contextual(ContextualBiasHead {
            window: 2,
            dim: 16,
            fallback: false,
        })),
        Some(BiasHead::Gated(GatedBiasHead {
            window: 2,
            dim: 16,
            alpha: AlphaMode::Learned,
            fallback: false,
        })),
    ] {
        let mut fx = small_fixture(16, 2, 5);
        if let Some(h) = &head {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            h.init_params(&mut fx.model.params, &mut rng).unwrap();
        }
        let (input, targets) = frame(&tokens, fx.model.config.max_len);
        let model = fx.model.clone();
        let res = HeadResources {
            freq: Some(&fx.freq),
            embeddings: Some(&fx.emb),
        };
        let vocab_size = model.config.vocab_size;
        let max_rel = grad_check(&model.params, 1e-4, |tape, ps| {
            let pm = ps.leaf_all(tape)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let hidden = model.build_hidden(tape, &pm, &input, false, &mut rng)?;
            let mut logits = model.build_logits(tape, &pm, hidden)?;
            if let Some(h) = &head {
                if h.needs_hidden() {
                    let bias = h
                        .per_position_bias(tape, &pm, &res, 5, hidden, pm.id(TOK_EMB))?
                        .expect("window history is present");
                    logits = tape.add(logits, bias)?;
                } else {
                    let bias = h
                        .static_bias(tape, &pm, &res, 5, vocab_size)?
                        .expect("window history is present");
                    logits = tape.add_row(logits, bias)?;
                }
            }
            tape.softmax_cross_entropy(logits, &targets)
        })
        .unwrap();
        if std::env::var("ACCEPTANCE_DEBUG").is_ok() {
            println!("gradcheck {:?}: {max_rel:.3e}", head.as_ref().map(|h| format!("{h:?}")));
        }
        worst = worst.max(max_rel);
    }

    let elapsed = start.elapsed();
    report(
        "criterion 1 (gradient suite)",
        worst < 1e-4 && elapsed.as_secs() < 120,
        &format!("max relative error {worst:.3e}, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: bias constructions that must reduce to the unbiased model.

struct ConstBias(Vec<f64>);

impl BiasProvider for ConstBias {
    fn bias_for(&self, _year: i32, _hidden: &Tensor) -> futurelm::error::Result<Bias> {
        Ok(Bias::Static(self.0.clone()))
    }
}

#[test]
fn criterion_2_bias_reductions() {
    let fx = small_fixture(16, 2, 9);
    let v = fx.model.config.vocab_size;

    // gated head with a fixed zero gate scale
    let mut gated_model = fx.model.clone();
    let gated = BiasHead::Gated(GatedBiasHead {
        window: 2,
        dim: 16,
        alpha: AlphaMode::Fixed(0.0),
        fallback: false,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    gated.init_params(&mut gated_model.params, &mut rng).unwrap();
    let res = HeadResources {
        freq: None,
        embeddings: Some(&fx.emb),
    };
    let gated_provider = attach(&gated, &gated_model, res).unwrap();

    let zero_vec = ConstBias(vec![0.0; v]);
    let shifted = ConstBias(vec![3.7; v]);

    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut max_diff = 0.0f64;
    for _ in 0..100 {
        let len = 1 + rand::Rng::gen_range(&mut rng, 0..6usize);
        let prefix: Vec<u32> = (0..len)
            .map(|_| rand::Rng::gen_range(&mut rng, 0..v as u32))
            .collect();
        let base = next_token_dist(&fx.model, &ZeroBias, 5, &prefix).unwrap();
        for probs in [
            next_token_dist(&fx.model, &zero_vec, 5, &prefix).unwrap(),
            next_token_dist(&gated_model, &gated_provider, 5, &prefix).unwrap(),
            next_token_dist(&fx.model, &shifted, 5, &prefix).unwrap(),
        ] {
            for (a, b) in base.iter().zip(&probs) {
                max_diff = max_diff.max((a - b).abs());
            }
        }
    }
    report(
        "criterion 2 (reduction suite)",
        max_diff < 1e-12,
        &format!("max per-token deviation {max_diff:.3e} over 100 prefixes"),
    );
}

// ---------------------------------------------------------------------
// Shared trained models for the directional criteria (3, 4, 5): on the
// default drift corpus, per seed, a baseline model, a frequency-head
// model, and a gated model, all evaluated on the held-out final year.

const SEEDS: [u64; 5] = [101, 202, 303, 404, 505];
const DEV_YEAR: i32 = 7;
const TEST_YEAR: i32 = 8;

struct SeedRun {
    base_ppl: f64,
    base_cpl: f64,
    freq_ppl: f64,
    freq_cpl: f64,
    gated_cpl: f64,
    rising_bias: f64,
    falling_bias: f64,
}

struct Shared {
    runs: Vec<SeedRun>,
}

fn freq_head() -> BiasHead {
    BiasHead::Frequency(FrequencyBiasHead {
        window: 3,
        hidden: 16,
        fallback: true,
    })
}

fn gated_head() -> BiasHead {
    BiasHead::Gated(GatedBiasHead {
        window: 2,
        dim: 32,
        alpha: AlphaMode::Learned,
        fallback: true,
    })
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 8,
        grad_accum: 1,
        lr: 1e-3,
        patience: 2,
        year_window: None,
        seed,
        freeze_lm: false,
    }
}

/// Second stage: the head is trained on top of the frozen baseline LM, so
/// a head model and its baseline differ only in the bias.
fn head_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 8,
        grad_accum: 1,
        lr: 3e-3,
        patience: 3,
        year_window: None,
        seed: seed ^ 0xBEEF,
        freeze_lm: true,
    }
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(build_shared)
}

fn build_shared() -> Shared {
    let spec = DriftSpec::default_acceptance(97);
    let (corpus, labels) = generate_drift_corpus(&spec).unwrap();
    let train_years: BTreeSet<i32> = (1..=6).collect();
    let (train_slice, dev_slice, test_slice) =
        split_by_year(&corpus, &train_years, DEV_YEAR, TEST_YEAR, 500, 1).unwrap();
    let vocab = train_slice.vocabulary.clone().unwrap();

    // history through the dev year: legitimate inputs when predicting the
    // test year
    let hist_years: BTreeSet<i32> = (1..=7).collect();
    let mut hist = corpus.slice_years(&hist_years);
    hist.retokenize(&vocab);
    let train_freq = frequency_table(&train_slice).unwrap();
    let hist_freq = frequency_table(&hist).unwrap();

    let stopwords = function_word_stopwords(&vocab);

    let model_cfg = DecoderConfig {
        layers: 2,
        heads: 4,
        d_model: 32,
        d_ff: 64,
        max_len: 32,
        dropout: 0.0,
        vocab_size: vocab.size(),
    };

    // baseline models, one per seed
    let empty = HeadResources {
        freq: None,
        embeddings: None,
    };
    let mut baselines = Vec::new();
    for &seed in &SEEDS {
        let mut m = DecoderLM::new(model_cfg.clone(), seed).unwrap();
        train(&mut m, None, &empty, &train_slice, &dev_slice, &train_config(seed)).unwrap();
        baselines.push(m);
    }

    // year embeddings from encoders fine-tuned off the first baseline
    let years_vec: Vec<i32> = (1..=7).collect();
    let ft_cfg = FineTuneConfig {
        epochs: 1,
        batch_size: 8,
        lr: 3e-4,
        seed: 0,
    };
    let enc = FineTunedEncoders::fine_tune(&baselines[0], &hist, &years_vec, &ft_cfg).unwrap();
    let emb = build_year_embeddings(&hist, &enc, &years_vec).unwrap();

    let mut runs = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        let base = &baselines[i];
        let (base_ppl, _) = perplexity(base, &ZeroBias, &test_slice).unwrap();
        let (base_cpl, _) = content_perplexity(base, &ZeroBias, &test_slice, &stopwords).unwrap();

        // frequency-head model: frozen baseline LM + trained head
        let fh = freq_head();
        let mut fm = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF0F0);
        fh.init_params(&mut fm.params, &mut rng).unwrap();
        let train_res = HeadResources {
            freq: Some(&train_freq),
            embeddings: None,
        };
        train(&mut fm, Some(&fh), &train_res, &train_slice, &dev_slice, &head_train_config(seed))
            .unwrap();
        let eval_res = HeadResources {
            freq: Some(&hist_freq),
            embeddings: None,
        };
        let fp = attach(&fh, &fm, eval_res).unwrap();
        let (freq_ppl, _) = perplexity(&fm, &fp, &test_slice).unwrap();
        let (freq_cpl, _) = content_perplexity(&fm, &fp, &test_slice, &stopwords).unwrap();
        let (rising_bias, falling_bias) = mean_biases(&fp, &vocab, &labels);

        // gated model: frozen baseline LM + trained head
        let gh = gated_head();
        let mut gm = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0F0F);
        gh.init_params(&mut gm.params, &mut rng).unwrap();
        let g_res = HeadResources {
            freq: None,
            embeddings: Some(&emb),
        };
        train(&mut gm, Some(&gh), &g_res, &train_slice, &dev_slice, &head_train_config(seed))
            .unwrap();
        let gp = attach(&gh, &gm, g_res).unwrap();
        let (gated_cpl, _) = content_perplexity(&gm, &gp, &test_slice, &stopwords).unwrap();

        runs.push(SeedRun {
            base_ppl,
            base_cpl,
            freq_ppl,
            freq_cpl,
            gated_cpl,
            rising_bias,
            falling_bias,
        });
    }
    Shared { runs }
}

/// Stopwords for the drift corpus: the template function words.
fn function_word_stopwords(vocab: &Vocabulary) -> StopwordList {
    let words: Vec<String> = [
        "we", "study", "the", "of", "in", ".", "this", "paper", "presents", "a", "for", "and",
        "with", "is", "new", "to", "improve", "on", "results", "show", "that", "helps", "propose",
        "evaluate", "against",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let (sw, _warnings) = StopwordList::from_words(vocab, &words);
    sw
}

/// Mean trained bias over programmed rising vs falling words for the test
/// year.
fn mean_biases(
    provider: &dyn BiasProvider,
    vocab: &Vocabulary,
    labels: &TrendLabels,
) -> (f64, f64) {
    let Bias::Static(bias) = provider.bias_for(TEST_YEAR, &Tensor::zeros(1, 1)).unwrap() else {
        panic!("frequency head yields a static bias");
    };
    let mean_of = |words: &[String]| {
        let vals: Vec<f64> = words
            .iter()
            .filter_map(|w| vocab.id(w))
            .map(|id| bias[id as usize])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    (mean_of(&labels.rising), mean_of(&labels.falling))
}

#[test]
fn criterion_3_frequency_head_beats_baseline_ppl() {
    let s = shared();
    let wins = s.runs.iter().filter(|r| r.freq_ppl < r.base_ppl).count();
    let pairs: Vec<String> = s
        .runs
        .iter()
        .map(|r| format!("{:.2}<{:.2}", r.freq_ppl, r.base_ppl))
        .collect();
    report(
        "criterion 3 (directional PPL)",
        wins >= 4,
        &format!("frequency beats baseline in {wins}/5 seeds: {}", pairs.join(", ")),
    );
}

#[test]
fn criterion_4_cpl_ordering() {
    let s = shared();
    let full_order = s
        .runs
        .iter()
        .filter(|r| r.gated_cpl <= r.freq_cpl && r.freq_cpl <= r.base_cpl)
        .count();
    let gated_wins = s.runs.iter().filter(|r| r.gated_cpl < r.base_cpl).count();
    let triples: Vec<String> = s
        .runs
        .iter()
        .map(|r| format!("{:.2}/{:.2}/{:.2}", r.gated_cpl, r.freq_cpl, r.base_cpl))
        .collect();
    report(
        "criterion 4 (directional CPL)",
        full_order >= 3 && gated_wins >= 4,
        &format!(
            "gated<=freq<=base in {full_order}/5, gated<base in {gated_wins}/5 (gated/freq/base: {})",
            triples.join(", ")
        ),
    );
}

#[test]
fn criterion_5_trend_detection() {
    let s = shared();
    let wins = s
        .runs
        .iter()
        .filter(|r| r.rising_bias > r.falling_bias)
        .count();
    let pairs: Vec<String> = s
        .runs
        .iter()
        .map(|r| format!("{:.3}>{:.3}", r.rising_bias, r.falling_bias))
        .collect();
    report(
        "criterion 5 (trend detection)",
        wins >= 4,
        &format!("rising bias above falling in {wins}/5 seeds: {}", pairs.join(", ")),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: year-i biases must not depend on year-i documents.

#[test]
fn criterion_6_no_leakage() {
    let fx = small_fixture(16, 1, 21);
    let year = 4; // biases for year 4 read only years 2 and 3
    let hidden = Tensor::matrix(2, 16, (0..32).map(|i| 0.01 * i as f64).collect()).unwrap();

    let heads = [
        BiasHead::Frequency(FrequencyBiasHead {
            window: 2,
            hidden: 8,
            fallback: false,
        }),
        BiasHead::Contextual(ContextualBiasHead {
            window: 2,
            dim: 16,
            fallback: false,
        }),
        BiasHead::Gated(GatedBiasHead {
            window: 2,
            dim: 16,
            alpha: AlphaMode::Learned,
            fallback: false,
        }),
    ];

    // three tamperings of the year-4 documents
    let mut shuffled = fx.corpus.clone();
    shuffled.docs_by_year.get_mut(&year).unwrap().reverse();
    let mut edited = fx.corpus.clone();
    for d in edited.docs_by_year.get_mut(&year).unwrap() {
        d.raw_text = "beta beta beta".into();
        d.tokens = fx.corpus.vocabulary.as_ref().unwrap().encode(&d.raw_text);
    }
    let mut deleted = fx.corpus.clone();
    deleted.docs_by_year.get_mut(&year).unwrap().clear();

    let mut ok = true;
    let mut detail = String::new();
    for head in &heads {
        let mut model = fx.model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        head.init_params(&mut model.params, &mut rng).unwrap();
        let enc = FineTunedEncoders::from_single(model.clone());

        let bias_bits = |corpus: &TemporalCorpus| -> Vec<u64> {
            let freq = frequency_table(corpus).unwrap();
            let emb = build_year_embeddings(corpus, &enc, &[2, 3]).unwrap();
            let res = HeadResources {
                freq: Some(&freq),
                embeddings: Some(&emb),
            };
            let provider = attach(head, &model, res).unwrap();
            match provider.bias_for(year, &hidden).unwrap() {
                Bias::Zero => vec![],
                Bias::Static(v) => v.iter().map(|x| x.to_bits()).collect(),
                Bias::PerPosition(t) => t.data().iter().map(|x| x.to_bits()).collect(),
            }
        };

        let reference = bias_bits(&fx.corpus);
        assert!(!reference.is_empty(), "bias should be defined for year {year}");
        for (name, tampered) in [
            ("shuffle", &shuffled),
            ("edit", &edited),
            ("delete", &deleted),
        ] {
            if bias_bits(tampered) != reference {
                ok = false;
                detail.push_str(&format!("{head:?} changed under {name}; "));
            }
        }
    }
    if detail.is_empty() {
        detail = "biases bit-identical under shuffle/edit/delete for all three heads".into();
    }
    report("criterion 6 (no leakage)", ok, &detail);
}

// ---------------------------------------------------------------------
// Criterion 7: metric oracles.

#[test]
fn criterion_7_metric_oracles() {
    let fx = small_fixture(16, 1, 41);
    let v = fx.model.config.vocab_size;

    // (a) content perplexity with no stopwords is exactly perplexity
    let (ppl, _) = perplexity(&fx.model, &ZeroBias, &fx.corpus).unwrap();
    let (cpl, _) =
        content_perplexity(&fx.model, &ZeroBias, &fx.corpus, &StopwordList::empty()).unwrap();
    let a_ok = ppl == cpl;

    // (b) an all-zero parameter set predicts uniformly: PPL = |V|
    let mut uniform = fx.model.clone();
    for i in 0..uniform.params.len() {
        let t = uniform.params.tensor_mut(i);
        t.data_mut().fill(0.0);
    }
    let (uppl, _) = perplexity(&uniform, &ZeroBias, &fx.corpus).unwrap();
    let b_ok = (uppl - v as f64).abs() < 1e-9;

    // (c) generation-based content score vs a brute-force oracle:
    // 2 generations against 3 references
    let refs: Vec<Vec<u32>> = vec![vec![2, 3, 4, 2], vec![5, 5, 3], vec![4, 2, 3, 5, 4]];
    let stopwords = {
        let (sw, _) =
            StopwordList::from_words(fx.corpus.vocabulary.as_ref().unwrap(), &["beta".into()]);
        sw
    };
    let decoding = DecodingConfig {
        mode: DecodeMode::Greedy,
        beam: 1,
        top_k: v,
        top_p: 1.0,
        max_tokens: 6,
        temperature: 1.0,
        seed: 9,
    };
    let cm_cfg = ContentMeteorConfig {
        n_g: 2,
        decoding: decoding.clone(),
    };
    let got = content_meteor(&fx.model, &ZeroBias, 5, &refs, &stopwords, &cm_cfg).unwrap();
    let strip = |t: &[u32]| -> Vec<u32> {
        t.iter().copied().filter(|&x| !stopwords.contains(x)).collect()
    };
    let mut oracle = 0.0;
    for i in 0..2 {
        let mut d = decoding.clone();
        d.seed = decoding.seed + i;
        let gen = strip(&generate(&fx.model, &ZeroBias, 5, &d).unwrap());
        let best = refs
            .iter()
            .map(|r| meteor(&gen, &strip(r)))
            .fold(0.0f64, f64::max);
        oracle += best;
    }
    let oracle = 100.0 * oracle / 2.0;
    let c_ok = got == oracle;

    // (d) self-similarity closed form
    let mut d_ok = true;
    for n in [1usize, 2, 5, 20] {
        let x: Vec<u32> = (0..n as u32).map(|i| i + 2).collect();
        let want = 1.0 - 0.5 / (n as f64).powi(3);
        if (meteor(&x, &x) - want).abs() > 1e-12 {
            d_ok = false;
        }
    }

    report(
        "criterion 7 (metric oracles)",
        a_ok && b_ok && c_ok && d_ok,
        &format!(
            "cpl==ppl {a_ok}, uniform ppl {uppl:.9} vs {v}, generation score {got:.6} vs oracle {oracle:.6}, self-similarity {d_ok}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: a single document is memorized within 200 steps.

#[test]
fn criterion_8_memorization_canary() {
    let start = std::time::Instant::now();
    let vocab = Vocabulary::from_words(
        ["</s>", "<unk>", "a", "b", "c", "d", "e", "f"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let mut corpus = TemporalCorpus::from_documents(vec![Document {
        year: 1,
        tokens: Vec::new(),
        raw_text: "a b c d e f a b c d".into(),
    }]);
    corpus.retokenize(&vocab);
    let doc = &corpus.docs_by_year[&1][0];
    let cfg = DecoderConfig {
        layers: 1,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        max_len: 16,
        dropout: 0.0,
        vocab_size: vocab.size(),
    };
    let mut model = DecoderLM::new(cfg, 3).unwrap();
    let (input, targets) = frame(&doc.tokens, model.config.max_len);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        &model.params,
    )
    .unwrap();
    for _ in 0..200 {
        let mut tape = Tape::new();
        let pm = model.params.leaf_all(&mut tape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hidden = model.build_hidden(&mut tape, &pm, &input, false, &mut rng).unwrap();
        let logits = model.build_logits(&mut tape, &pm, hidden).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &targets).unwrap();
        let grads = tape.backward(loss).unwrap();
        let grad_tensors: Vec<Tensor> = (0..model.params.len())
            .map(|i| {
                let (name, t) = model.params.at(i);
                grads.wrt(pm.id(name), t)
            })
            .collect();
        adam.step(&mut model.params, &grad_tensors).unwrap();
    }
    let (ppl, _) = perplexity(&model, &ZeroBias, &corpus).unwrap();
    let elapsed = start.elapsed();
    report(
        "criterion 8 (memorization canary)",
        ppl < 1.5 && elapsed.as_secs() < 60,
        &format!("single-document ppl {ppl:.4} after 200 steps, {elapsed:.1?}"),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: the CLI pipeline is byte-for-byte deterministic.

#[test]
fn criterion_9_pipeline_determinism() {
    use std::process::Command;

    let bin = env!("CARGO_BIN_EXE_futurelm");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");

    let spec = DriftSpec {
        years: 5,
        docs_per_year: 30,
        doc_len_min: 6,
        doc_len_max: 10,
        rising: vec![WordDrift {
            word: "surge".into(),
            trajectory: Trajectory::LogisticRise {
                low: 0.1,
                high: 4.0,
                midpoint: 3.0,
                rate: 1.5,
            },
        }],
        falling: vec![WordDrift {
            word: "fade".into(),
            trajectory: Trajectory::ExponentialDecay {
                low: 0.1,
                high: 4.0,
                rate: 0.7,
            },
        }],
        stable: (0..6)
            .map(|i| WordDrift {
                word: format!("base{i}"),
                trajectory: Trajectory::Constant { weight: 1.0 },
            })
            .collect(),
        templates: vec![
            "we study {} and {} here .".into(),
            "a note on {} with {} .".into(),
        ],
        seed: 5,
    };
    let config = futurelm::cli::ToolConfig {
        model: DecoderConfig {
            layers: 1,
            heads: 2,
            d_model: 16,
            d_ff: 32,
            max_len: 24,
            dropout: 0.0,
            vocab_size: 0,
        },
        train: TrainConfig {
            epochs: 2,
            batch_size: 4,
            grad_accum: 1,
            lr: 1e-3,
            patience: 2,
            year_window: None,
            seed: 7,
            freeze_lm: false,
        },
        decode: DecodingConfig {
            mode: DecodeMode::Sample,
            beam: 2,
            top_k: 10,
            top_p: 0.95,
            max_tokens: 8,
            temperature: 1.0,
            seed: 3,
        },
        head: Some(BiasHead::Frequency(FrequencyBiasHead {
            window: 2,
            hidden: 8,
            fallback: true,
        })),
        synth: Some(spec),
        meteor: futurelm::cli::MeteorSettings { n_g: 2 },
        ..Default::default()
    };
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let run_pipeline = |out: &std::path::Path| {
        let step = |args: &[&str]| {
            let status = Command::new(bin)
                .arg("--config")
                .arg(&config_path)
                .arg("--out")
                .arg(out)
                .args(args)
                .status()
                .unwrap();
            assert!(status.success(), "step {args:?} failed");
        };
        let dataset = out.join("dataset.json");
        let model = out.join("model.ckpt");
        step(&["synth"]);
        step(&["train", "--dataset", dataset.to_str().unwrap()]);
        step(&[
            "eval",
            "--dataset",
            dataset.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--generation",
        ]);
        step(&[
            "generate",
            "--model",
            model.to_str().unwrap(),
            "--year",
            "5",
            "--count",
            "2",
            "--dataset",
            dataset.to_str().unwrap(),
        ]);
    };

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    std::fs::create_dir_all(&out_a).unwrap();
    std::fs::create_dir_all(&out_b).unwrap();
    run_pipeline(&out_a);
    run_pipeline(&out_b);

    let mut ok = true;
    let mut detail = String::new();
    for artifact in ["dataset.json", "model.ckpt", "report.json", "generations.ndjson"] {
        let a = std::fs::read(out_a.join(artifact)).unwrap();
        let b = std::fs::read(out_b.join(artifact)).unwrap();
        if a != b {
            ok = false;
            detail.push_str(&format!("{artifact} differs; "));
        }
    }
    if detail.is_empty() {
        detail = "dataset, checkpoint, report, and generations byte-identical across reruns".into();
    }
    report("criterion 9 (pipeline determinism)", ok, &detail);
}
