//! Greedy, nucleus and beam decoding over a [`DistributionBackend`].

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{detokenize, CompletionResult, DistributionBackend};

pub const DEFAULT_BEAMS: usize = 5;

fn render<D: DistributionBackend + ?Sized>(backend: &D, tokens: &[usize], ended: bool, logprobs: Vec<f64>) -> CompletionResult {
    let vocab = backend.vocabulary();
    let words: Vec<&str> = tokens.iter().map(|&t| vocab[t].as_str()).collect();
    CompletionResult {
        text: detokenize(&words),
        ended,
        token_logprobs: Some(logprobs),
    }
}

/// First index of the largest probability.
fn argmax_token(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Picks the most probable token at every step (ties by vocabulary order).
///
/// The logprob list covers every emitted token including the end token.
pub fn greedy_decode<D: DistributionBackend + ?Sized>(backend: &D, prompt: &str, max_tokens: usize) -> CompletionResult {
    let end = backend.end_token();
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    for _ in 0..max_tokens {
        let dist = backend.next_token_dist(prompt, &tokens);
        let next = argmax_token(&dist);
        logprobs.push(dist[next].ln());
        if next == end {
            return render(backend, &tokens, true, logprobs);
        }
        tokens.push(next);
    }
    render(backend, &tokens, false, logprobs)
}

/// Token indices sorted by descending probability, ties by vocabulary order.
fn ranked(dist: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Draws one token from the smallest top-ranked set whose mass reaches `top_p`.
pub(crate) fn nucleus_step<R: Rng>(dist: &[f64], top_p: f64, rng: &mut R) -> usize {
    let order = ranked(dist);
    let mut cut = order.len();
    let mut mass = 0.0;
    for (rank, &t) in order.iter().enumerate() {
        mass += dist[t];
        if mass >= top_p {
            cut = rank + 1;
            break;
        }
    }
    let nucleus = &order[..cut];
    let total: f64 = nucleus.iter().map(|&t| dist[t]).sum();
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for &t in nucleus {
        acc += dist[t];
        if target < acc {
            return t;
        }
    }
    *nucleus.last().expect("distribution has positive mass")
}

fn temper(dist: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 1.0 {
        return dist.to_vec();
    }
    let scaled: Vec<f64> = dist.iter().map(|p| if *p > 0.0 { p.powf(1.0 / temperature) } else { 0.0 }).collect();
    let z: f64 = scaled.iter().sum();
    scaled.iter().map(|p| p / z).collect()
}

/// Nucleus (top-p) sampling at temperature one.
pub fn nucleus_sample<D: DistributionBackend + ?Sized>(
    backend: &D,
    prompt: &str,
    p: f64,
    rng_seed: u64,
    max_tokens: usize,
) -> CompletionResult {
    nucleus_sample_tempered(backend, prompt, p, 1.0, rng_seed, max_tokens)
}

/// Nucleus sampling after temperature scaling of the distribution.
///
/// Reported logprobs are those of the unscaled model distribution.
pub fn nucleus_sample_tempered<D: DistributionBackend + ?Sized>(
    backend: &D,
    prompt: &str,
    p: f64,
    temperature: f64,
    rng_seed: u64,
    max_tokens: usize,
) -> CompletionResult {
    if temperature == 0.0 {
        return greedy_decode(backend, prompt, max_tokens);
    }
    let end = backend.end_token();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    for _ in 0..max_tokens {
        let dist = backend.next_token_dist(prompt, &tokens);
        let next = nucleus_step(&temper(&dist, temperature), p, &mut rng);
        logprobs.push(dist[next].ln());
        if next == end {
            return render(backend, &tokens, true, logprobs);
        }
        tokens.push(next);
    }
    render(backend, &tokens, false, logprobs)
}

#[derive(Clone)]
struct Beam {
    tokens: Vec<usize>,
    logprobs: Vec<f64>,
    score: f64,
}

fn by_score_desc(a: &(Beam, bool), b: &(Beam, bool)) -> Ordering {
    b.0.score.partial_cmp(&a.0.score).unwrap_or(Ordering::Equal)
}

/// Beam search on total (unnormalized) log-probability.
///
/// Hypotheses that emit the end token are frozen. The best finished
/// hypothesis wins; if none finished within `max_tokens`, the best unfinished
/// one is returned. Candidate ties keep expansion order (parent beam rank,
/// then vocabulary order), so one beam reproduces greedy decoding.
pub fn beam_search<D: DistributionBackend + ?Sized>(
    backend: &D,
    prompt: &str,
    beams: usize,
    max_tokens: usize,
) -> CompletionResult {
    let beams = beams.max(1);
    let end = backend.end_token();
    let mut active = vec![Beam { tokens: Vec::new(), logprobs: Vec::new(), score: 0.0 }];
    let mut finished: Vec<Beam> = Vec::new();

    for _ in 0..max_tokens {
        let mut candidates: Vec<(Beam, bool)> = Vec::new();
        for beam in &active {
            let dist = backend.next_token_dist(prompt, &beam.tokens);
            for (t, &p) in dist.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let mut next = beam.clone();
                next.score += p.ln();
                next.logprobs.push(p.ln());
                if t != end {
                    next.tokens.push(t);
                }
                candidates.push((next, t == end));
            }
        }
        // Stable sort keeps expansion order among equal scores.
        candidates.sort_by(by_score_desc);
        candidates.truncate(beams);
        active.clear();
        for (beam, done) in candidates {
            if done {
                finished.push(beam);
            } else {
                active.push(beam);
            }
        }
        let best_finished = finished.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
        let best_active = active.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
        // Scores only fall as hypotheses grow.
        if active.is_empty() || best_finished >= best_active {
            break;
        }
    }

    let pick = |pool: &[Beam]| -> Option<Beam> {
        let mut best: Option<&Beam> = None;
        for b in pool {
            if best.is_none_or(|cur| b.score > cur.score) {
                best = Some(b);
            }
        }
        best.cloned()
    };
    match pick(&finished) {
        Some(b) => render(backend, &b.tokens, true, b.logprobs),
        None => {
            let b = pick(&active).expect("beam search keeps at least one hypothesis");
            render(backend, &b.tokens, false, b.logprobs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::ClosureBackend;
    use super::*;

    fn constant(probs: Vec<f64>, vocab: &[&str]) -> ClosureBackend {
        ClosureBackend::new(vocab, move |_, _| probs.clone())
    }

    #[test]
    fn greedy_repeats_top_token() {
        let b = constant(vec![0.9, 0.1], &["a", "</s>"]);
        let r = greedy_decode(&b, "", 4);
        assert_eq!(r.text, "a a a a");
        assert!(!r.ended);
    }

    #[test]
    fn greedy_immediate_end() {
        let b = constant(vec![0.0, 1.0], &["a", "</s>"]);
        let r = greedy_decode(&b, "", 4);
        assert_eq!(r.text, "");
        assert!(r.ended);
    }

    #[test]
    fn greedy_two_step_chain() {
        // After nothing: x .6, y .4. After x: z .7, end .3. After x z: end.
        let b = ClosureBackend::new(&["x", "y", "z", "</s>"], |_, prefix| match prefix {
            [] => vec![0.6, 0.4, 0.0, 0.0],
            [0] => vec![0.0, 0.0, 0.7, 0.3],
            _ => vec![0.0, 0.0, 0.0, 1.0],
        });
        let r = greedy_decode(&b, "", 10);
        assert_eq!(r.text, "x z");
        assert!(r.ended);
        let lp = r.token_logprobs.unwrap();
        assert!((lp.iter().sum::<f64>() - (0.6f64 * 0.7).ln()).abs() < 1e-12);
    }

    #[test]
    fn nucleus_of_size_one() {
        let b = constant(vec![0.95, 0.05], &["a", "</s>"]);
        for seed in 0..50 {
            let r = nucleus_sample(&b, "", 0.9, seed, 3);
            assert_eq!(r.text, "a a a");
        }
    }

    #[test]
    fn nucleus_is_reproducible() {
        let b = constant(vec![0.3, 0.3, 0.2, 0.2], &["a", "b", "c", "</s>"]);
        for seed in 0..20 {
            assert_eq!(nucleus_sample(&b, "", 0.9, seed, 12), nucleus_sample(&b, "", 0.9, seed, 12));
        }
    }

    #[test]
    fn nucleus_step_cut() {
        // Sorted: .5 (2), .3 (0), .2 (1). p = .7 keeps tokens 2 and 0.
        let dist = [0.3, 0.2, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [0usize; 3];
        for _ in 0..2000 {
            seen[nucleus_step(&dist, 0.7, &mut rng)] += 1;
        }
        assert_eq!(seen[1], 0);
        assert!(seen[0] > 0 && seen[2] > seen[0]);
    }

    #[test]
    fn temperature_sharpens() {
        let t = temper(&[0.6, 0.4], 0.5);
        assert!((t[0] - 0.36 / 0.52).abs() < 1e-12);
    }

    #[test]
    fn beam_end_everywhere() {
        let b = constant(vec![0.0, 1.0], &["a", "</s>"]);
        let r = beam_search(&b, "", 5, 10);
        assert_eq!(r.text, "");
        assert!(r.ended);
    }

    #[test]
    fn beam_unfinished_at_cap() {
        let b = constant(vec![0.6, 0.4, 0.0], &["a", "b", "</s>"]);
        let r = beam_search(&b, "", 3, 2);
        assert_eq!(r.text, "a a");
        assert!(!r.ended);
    }
}
