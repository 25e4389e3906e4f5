//! Greedy versus beam search over a hand-written next-token table, where the
//! greedy first step leads into a poor continuation.

use jet::corpus::{TokenId, Vocabulary};
use jet::inference::{beam_search, greedy_decode, DecodeConfig, StepModel};

struct Table;

impl StepModel for Table {
    fn vocab_size(&self) -> usize {
        7
    }

    fn log_probs(&self, prefix: &[TokenId]) -> jet::Result<Vec<f64>> {
        let eos = Vocabulary::EOS_ID;
        let mut p = vec![0.0; 7];
        match prefix {
            [_] => {
                p[5] = 0.55;
                p[6] = 0.45;
            }
            [_, 5] => {
                p[5] = 0.3;
                p[6] = 0.3;
                p[eos] = 0.4;
            }
            [_, 6] => p[eos] = 0.95,
            _ => p[eos] = 1.0,
        }
        let rest = 1.0 - p.iter().sum::<f64>();
        let free = p.iter().filter(|&&x| x == 0.0).count() as f64;
        Ok(p.into_iter().map(|x| if x == 0.0 { rest / free } else { x }.ln()).collect())
    }
}

fn main() -> jet::Result<()> {
    let greedy = greedy_decode(&Table, 4)?;
    println!("greedy: {greedy:?}");
    let result = beam_search(&Table, &DecodeConfig { beam_size: 3, max_len: 4, length_penalty: 1.0 })?;
    for h in &result.ranked {
        println!("beam:   {:?}  log p {:.3}  score {:.3}", h.output(), h.log_prob, h.score(1.0));
    }
    Ok(())
}
