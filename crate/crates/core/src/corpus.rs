//! Synthetic program corpus.
//!
//! Each task is a function-writing exercise rendered twice: a clean "high"
//! body and a "low" body that trips one of the mock analyzer's rules
//! (else-after-return, range-len loops, singleton comparisons, shadowed
//! builtins, bare returns). All renders stay inside the closed synthetic
//! vocabulary, so the corpus can pretrain the toy model and also serve as
//! a stored candidate set for pair construction.

use crate::error::{Error, Result};
use crate::eval::TaskCategory;
use crate::model::Vocab;
use crate::tasks::{TaskSpec, TaskTest};
use crate::util::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct CorpusTask {
    pub task: TaskSpec,
    /// Clean render of the task body.
    pub high: String,
    /// Defect-bearing render of the same body.
    pub low: String,
    /// Which skeleton family produced this task.
    pub template: &'static str,
}

#[derive(Debug, Clone)]
struct Render {
    template: &'static str,
    instruction: String,
    high: String,
    low: String,
}

impl Render {
    fn new(template: &'static str, instruction: String, high: String, low: String) -> Render {
        Render {
            template,
            instruction,
            high,
            low,
        }
    }
}

const FNAMES: [&str; 2] = ["f", "g"];
const PAIR_VARS: [&str; 10] = ["a", "b", "c", "d", "n", "x", "y", "v", "val", "out"];
const SEQ_VARS: [&str; 12] = [
    "data", "res", "out", "val", "a", "b", "c", "d", "x", "y", "n", "v",
];
const ACC_VARS: [&str; 2] = ["total", "res"];
const LOOP_VARS: [&str; 3] = ["v", "x", "y"];
const FLAG_VARS: [&str; 4] = ["flag", "c", "d", "v"];
const VAL_VARS: [&str; 4] = ["val", "x", "y", "out"];
const RESULT_VARS: [&str; 3] = ["res", "out", "total"];
const SHADOWED: [&str; 3] = ["len", "print", "max"];

fn clamp_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for p in PAIR_VARS {
            for q in PAIR_VARS {
                if p == q {
                    continue;
                }
                out.push(Render::new(
                    "clamp",
                    format!("def {fname} ( {p} , {q} ) :\n"),
                    format!("if {p} <= {q} :\nreturn {q}\nreturn {p}\n"),
                    format!("if {p} <= {q} :\nreturn {q}\nelse :\nreturn {p}\n"),
                ));
            }
        }
    }
    out
}

fn sum_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for s in SEQ_VARS {
            for t in ACC_VARS {
                for lv in LOOP_VARS {
                    if s == t || s == lv || t == lv {
                        continue;
                    }
                    out.push(Render::new(
                        "sum",
                        format!("def {fname} ( {s} ) :\n"),
                        format!(
                            "{t} = 0\nfor {lv} in {s} :\n{t} = {t} + {lv}\nreturn {t}\n"
                        ),
                        format!(
                            "{t} = 0\nfor i in range ( len ( {s} ) ) :\n{t} = {t} + {s} [ i ]\nreturn {t}\n"
                        ),
                    ));
                }
            }
        }
    }
    out
}

fn diff_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for p in PAIR_VARS {
            for q in PAIR_VARS {
                if p == q {
                    continue;
                }
                out.push(Render::new(
                    "diff",
                    format!("def {fname} ( {p} , {q} ) :\n"),
                    format!("if {p} < {q} :\nreturn {q} - {p}\nreturn {p}\n"),
                    format!("if ( {p} < {q} ) == True :\nreturn {q} - {p}\nreturn {p}\n"),
                ));
            }
        }
    }
    out
}

fn flag_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for fl in FLAG_VARS {
            for vl in VAL_VARS {
                for k in ["0", "1"] {
                    out.push(Render::new(
                        "flag",
                        format!("def {fname} ( {fl} , {vl} ) :\n"),
                        format!("if not {fl} :\nreturn {k}\nreturn {vl}\n"),
                        format!("if {fl} == False :\nreturn {k}\nreturn {vl}\n"),
                    ));
                }
            }
        }
    }
    out
}

fn product_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for p in PAIR_VARS {
            for q in PAIR_VARS {
                if p == q {
                    continue;
                }
                for rv in RESULT_VARS {
                    if rv == p || rv == q {
                        continue;
                    }
                    for bi in SHADOWED {
                        out.push(Render::new(
                            "product",
                            format!("def {fname} ( {p} , {q} ) :\n"),
                            format!("{rv} = {p} * {q}\nreturn {rv}\n"),
                            format!("{bi} = {p} * {q}\nreturn {bi}\n"),
                        ));
                    }
                }
            }
        }
    }
    out
}

fn guard_renders() -> Vec<Render> {
    let mut out = Vec::new();
    for fname in FNAMES {
        for p in PAIR_VARS {
            for q in PAIR_VARS {
                if p == q {
                    continue;
                }
                out.push(Render::new(
                    "guard",
                    format!("def {fname} ( {p} , {q} ) :\n"),
                    format!("if {p} > {q} :\nreturn {p}\nreturn None\n"),
                    format!("if {p} > {q} :\nreturn {p}\nreturn\n"),
                ));
            }
        }
    }
    out
}

/// Builds `n_tasks` distinct tasks, drawing round-robin from the six
/// skeleton families. Instructions are globally unique so each one
/// identifies its task. Every other task carries an always-passing
/// essential test; the rest have none, exercising the selection fallback.
pub fn make_corpus(n_tasks: usize, seed: u64) -> Result<Vec<CorpusTask>> {
    if n_tasks == 0 {
        return Err(Error::InvalidParameter(
            "corpus needs at least one task".to_string(),
        ));
    }
    let mut families: Vec<Vec<Render>> = vec![
        clamp_renders(),
        sum_renders(),
        diff_renders(),
        flag_renders(),
        product_renders(),
        guard_renders(),
    ];
    for (t, fam) in families.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus-family", t as u64));
        fam.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; families.len()];
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(n_tasks);
    let mut family = 0usize;
    let mut stalled = 0usize;
    while out.len() < n_tasks {
        if stalled >= families.len() {
            return Err(Error::InvalidParameter(format!(
                "template space exhausted after {} of {} tasks",
                out.len(),
                n_tasks
            )));
        }
        let fam = &families[family];
        let cursor = &mut cursors[family];
        let mut picked = None;
        while *cursor < fam.len() {
            let r = &fam[*cursor];
            *cursor += 1;
            if taken.insert(r.instruction.clone()) {
                picked = Some(r.clone());
                break;
            }
        }
        match picked {
            Some(r) => {
                stalled = 0;
                let idx = out.len();
                let tests = if idx % 2 == 0 {
                    vec![TaskTest {
                        cmd: "true".to_string(),
                        essential: true,
                    }]
                } else {
                    vec![]
                };
                let category = match idx % 3 {
                    0 => TaskCategory::Introductory,
                    1 => TaskCategory::Interview,
                    _ => TaskCategory::Competition,
                };
                out.push(CorpusTask {
                    task: TaskSpec {
                        task_id: format!("task-{idx:04}"),
                        category,
                        instruction: r.instruction,
                        tests,
                    },
                    high: r.high,
                    low: r.low,
                    template: r.template,
                });
            }
            None => stalled += 1,
        }
        family = (family + 1) % families.len();
    }
    Ok(out)
}

/// Token id sequences for base-model pretraining: for every task, the
/// instruction followed by each render, bracketed by the begin/end tokens.
pub fn pretrain_sequences(tasks: &[CorpusTask], vocab: &Vocab) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::with_capacity(tasks.len() * 2);
    for t in tasks {
        let instr = vocab.encode_source(&t.task.instruction)?;
        for body in [&t.high, &t.low] {
            let mut seq = Vec::with_capacity(instr.len() + 24);
            seq.push(vocab.bos());
            seq.extend_from_slice(&instr);
            seq.extend(vocab.encode_source(body)?);
            seq.push(vocab.eos());
            out.push(seq);
        }
    }
    Ok(out)
}

/// Deterministic train/held-out split by task index. Both sides come back
/// sorted ascending.
pub fn split_holdout(n: usize, holdout: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if holdout >= n {
        return Err(Error::InvalidParameter(format!(
            "holdout {holdout} must be smaller than the task count {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "holdout-split", 0));
    idx.shuffle(&mut rng);
    let mut held: Vec<usize> = idx[..holdout].to_vec();
    let mut train: Vec<usize> = idx[holdout..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((train, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexdiff::tokenize;
    use crate::quality::{compute_quality_score, default_rules, mock_analyze};

    #[test]
    fn corpus_is_deterministic_and_distinct() {
        let a = make_corpus(210, 7).unwrap();
        let b = make_corpus(210, 7).unwrap();
        assert_eq!(a.len(), 210);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.task, y.task);
            assert_eq!(x.high, y.high);
            assert_eq!(x.low, y.low);
        }
        let instructions: BTreeSet<&str> =
            a.iter().map(|t| t.task.instruction.as_str()).collect();
        assert_eq!(instructions.len(), a.len());
        let c = make_corpus(210, 8).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.task.instruction != y.task.instruction));
    }

    #[test]
    fn every_render_is_vocab_closed() {
        let vocab = Vocab::synthetic();
        for t in make_corpus(210, 0).unwrap() {
            vocab.encode_source(&t.task.instruction).unwrap();
            vocab.encode_source(&t.high).unwrap();
            vocab.encode_source(&t.low).unwrap();
        }
    }

    #[test]
    fn high_scores_beat_low_scores_by_at_least_the_gap() {
        let rules = default_rules();
        for t in make_corpus(210, 0).unwrap() {
            let hi = mock_analyze(&tokenize(&t.high).unwrap(), &rules);
            let lo = mock_analyze(&tokenize(&t.low).unwrap(), &rules);
            let qh = compute_quality_score(&hi);
            let ql = compute_quality_score(&lo);
            assert_eq!(qh, 10.0, "{}: clean render must be clean", t.template);
            assert!(
                qh - ql > 1.0,
                "{}: gap {qh} - {ql} too small for pairing",
                t.template
            );
            assert!(ql > 0.0, "{}: low render must stay usable", t.template);
        }
    }

    #[test]
    fn all_templates_appear() {
        let tasks = make_corpus(210, 3).unwrap();
        let names: BTreeSet<&str> = tasks.iter().map(|t| t.template).collect();
        assert_eq!(
            names,
            BTreeSet::from(["clamp", "sum", "diff", "flag", "product", "guard"])
        );
    }

    #[test]
    fn pretrain_sequences_bracket_and_fit_context() {
        let tasks = make_corpus(50, 1).unwrap();
        let vocab = Vocab::synthetic();
        let seqs = pretrain_sequences(&tasks, &vocab).unwrap();
        assert_eq!(seqs.len(), 100);
        for s in &seqs {
            assert_eq!(s[0], vocab.bos());
            assert_eq!(*s.last().unwrap(), vocab.eos());
            assert!(s.len() <= 64, "sequence of {} tokens is too long", s.len());
        }
    }

    #[test]
    fn split_is_disjoint_and_sorted() {
        let (train, held) = split_holdout(100, 20, 5).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(held.len(), 20);
        let mut all: Vec<usize> = train.iter().chain(&held).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(train.windows(2).all(|w| w[0] < w[1]));
        let (t2, h2) = split_holdout(100, 20, 5).unwrap();
        assert_eq!((train, held), (t2, h2));
        assert!(split_holdout(10, 10, 0).is_err());
    }
}
