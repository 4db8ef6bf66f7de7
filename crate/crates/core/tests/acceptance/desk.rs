use std::sync::OnceLock;
use std::time::Instant;

use errsup::autodiff::Init;
use errsup::corpus::{ParallelCorpus, SyntheticTask, SyntheticTaskSpec};
use errsup::decoding::DecodeConfig;
use errsup::metrics::CorpusScores;
use errsup::models::{Discriminator, DiscriminatorConfig, Seq2Seq, Seq2SeqConfig};
use errsup::negatives::ErrorType;
use errsup::parallel::Execution;
use errsup::training::{
    decode_and_score, train_discriminator, train_mle, train_rl, DiscConfig, MleConfig, RewardSpec, RlConfig,
    SelectMetric,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Outcome;

const SEEDS: [u64; 3] = [1, 2, 3];

fn task(vocab: usize, seed: u64, train: usize, dev: usize) -> (SyntheticTask, ParallelCorpus, ParallelCorpus) {
    let task = SyntheticTask::new(SyntheticTaskSpec::random(vocab, 5, 15, 0.2, seed)).unwrap();
    let tr = task.generate(train);
    let dv = SyntheticTask::new(task.spec.with_seed(seed + 1000)).unwrap().generate(dev);
    (task, tr, dv)
}

fn discriminator(task: &SyntheticTask, train: &ParallelCorpus, dev: &ParallelCorpus, kind: ErrorType, seed: u64, iters: u64) -> (Discriminator, f64) {
    let dcfg = DiscriminatorConfig::new(task.source_vocab.len(), task.target_vocab.len(), 32);
    let mut d = Discriminator::new(dcfg, Init::Uniform(0.08), &mut ChaCha8Rng::seed_from_u64(seed + 7));
    let cfg = DiscConfig {
        batch: 32,
        eval_every: 100,
        max_iters: iters,
        lr: 3e-3,
        seed,
        dev_seed: seed + 1,
        ..DiscConfig::new(kind)
    };
    let r = train_discriminator(&mut d, train, dev, &cfg).unwrap();
    (d, r.best_metric)
}

pub fn criterion_4() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut trend = 0;
    for seed in SEEDS {
        let (t, train, dev) = task(50, seed, 5000, 500);
        let mut acc = [0.0; 2];
        for (k, kind) in [ErrorType::Repeat, ErrorType::Drop].into_iter().enumerate() {
            let start = Instant::now();
            acc[k] = discriminator(&t, &train, &dev, kind, seed, 600).1;
            let mins = start.elapsed().as_secs_f64() / 60.0;
            ok &= mins < 15.0;
            lines.push(format!("seed {seed} D_{} {:.2} ({mins:.1} min)", kind.label(), acc[k]));
        }
        ok &= acc[0] >= 90.0 && acc[1] >= 70.0;
        if acc[0] >= acc[1] {
            trend += 1;
        }
    }
    lines.push(format!("D_REP >= D_DROP in {trend}/3 seeds"));
    Outcome::new(ok && trend >= 2, lines.join("; "))
}

/// An undertrained generator shared by the end-to-end criteria.
struct Desk {
    seed: u64,
    train: ParallelCorpus,
    dev: ParallelCorpus,
    mle: Seq2Seq,
    mle_iters: u64,
    mle_scores: CorpusScores,
    d_rep: Discriminator,
    d_drop: Discriminator,
}

/// MLE stops at the first evaluation with dev perplexity at or below this.
const MLE_TARGET_PPL: f64 = 3.0;

fn scores(m: &Seq2Seq, dev: &ParallelCorpus) -> CorpusScores {
    decode_and_score(m, dev, &DecodeConfig::greedy(), Execution::Parallel).unwrap()
}

fn desks() -> &'static [Desk] {
    static DESKS: OnceLock<Vec<Desk>> = OnceLock::new();
    DESKS.get_or_init(|| {
        SEEDS
            .iter()
            .map(|&seed| {
                let (t, train, dev) = task(30, seed, 500, 200);
                let cfg = Seq2SeqConfig::new(t.source_vocab.len(), t.target_vocab.len(), 48);
                let mut mle = Seq2Seq::new(cfg, Init::Uniform(0.1), &mut ChaCha8Rng::seed_from_u64(seed));
                let mc = MleConfig {
                    eval_every: 50,
                    max_iters: 3000,
                    stop_below: Some(MLE_TARGET_PPL),
                    seed,
                    ..MleConfig::default()
                };
                let mle_iters = train_mle(&mut mle, &train, &dev, &mc).unwrap().best_iter;
                let mle_scores = scores(&mle, &dev);
                let d_rep = discriminator(&t, &train, &dev, ErrorType::Repeat, seed, 600).0;
                let d_drop = discriminator(&t, &train, &dev, ErrorType::Drop, seed, 600).0;
                Desk {
                    seed,
                    train,
                    dev,
                    mle,
                    mle_iters,
                    mle_scores,
                    d_rep,
                    d_drop,
                }
            })
            .collect()
    })
}

fn fine_tune(desk: &Desk, reward: RewardSpec, disc: Option<&Discriminator>, select: SelectMetric, lambda_mixed: f64) -> CorpusScores {
    let mut m = desk.mle.clone();
    let cfg = RlConfig {
        lambda_mixed,
        reward,
        iterations: 300,
        lr: 0.01,
        eval_every: 50,
        select,
        seed: desk.seed,
        ..RlConfig::default()
    };
    train_rl(&mut m, disc, &desk.train, &desk.dev, &cfg).unwrap();
    scores(&m, &desk.dev)
}

fn drop_of(s: &CorpusScores) -> f64 {
    s.drop.expect("desk corpora carry alignments")
}

pub fn criterion_5() -> Outcome {
    let mut lines = Vec::new();
    let (mut rep_wins, mut drop_wins) = (0, 0);
    for desk in desks() {
        let base = &desk.mle_scores;
        let rep = fine_tune(desk, RewardSpec::discriminator_only(), Some(&desk.d_rep), SelectMetric::Erep, 0.5);
        let drop = fine_tune(desk, RewardSpec::discriminator_only(), Some(&desk.d_drop), SelectMetric::Drop, 0.5);
        let control = fine_tune(desk, RewardSpec::gleu_only(), None, SelectMetric::Erep, 1.0);
        let undertrained = base.erep >= 1.0;
        let rep_ok = undertrained && rep.erep <= 0.8 * base.erep && rep.bleu >= base.bleu - 1.0;
        let drop_ok = undertrained && drop_of(&drop) <= 0.9 * drop_of(base) && drop.bleu >= base.bleu - 1.0;
        rep_wins += rep_ok as usize;
        drop_wins += drop_ok as usize;
        lines.push(format!(
            "seed {}: MLE@{} eREP {:.2} DROP {:.2} BLEU {:.1} | RL-D_REP eREP {:.2} BLEU {:.1} | RL-D_DROP DROP {:.2} BLEU {:.1} | MLE-continued eREP {:.2} DROP {:.2} BLEU {:.1}",
            desk.seed,
            desk.mle_iters,
            base.erep,
            drop_of(base),
            base.bleu,
            rep.erep,
            rep.bleu,
            drop_of(&drop),
            drop.bleu,
            control.erep,
            drop_of(&control),
            control.bleu
        ));
    }
    lines.push(format!("eREP -20% in {rep_wins}/3, DROP -10% in {drop_wins}/3"));
    Outcome::new(rep_wins >= 2 && drop_wins >= 2, lines.join("\n    "))
}

pub fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    let (mut bleu_wins, mut joint_wins) = (0, 0);
    for desk in desks() {
        let base = &desk.mle_scores;
        let g = fine_tune(desk, RewardSpec::gleu_only(), None, SelectMetric::Bleu, 0.5);
        let joint = fine_tune(desk, RewardSpec { lambda_rl: 0.5 }, Some(&desk.d_rep), SelectMetric::Bleu, 0.5);
        bleu_wins += (g.bleu > base.bleu) as usize;
        joint_wins += (joint.erep <= g.erep) as usize;
        lines.push(format!(
            "seed {}: MLE BLEU {:.1} | RL-GLEU BLEU {:.1} eREP {:.2} | RL-GLEU-D_REP BLEU {:.1} eREP {:.2}",
            desk.seed, base.bleu, g.bleu, g.erep, joint.bleu, joint.erep
        ));
    }
    lines.push(format!("BLEU up in {bleu_wins}/3, joint eREP <= RL-GLEU in {joint_wins}/3"));
    Outcome::new(bleu_wins >= 2 && joint_wins >= 2, lines.join("\n    "))
}
