//! Surrogate for the per-vehicle congestion-cause classifier: a
//! configurable confusion model producing full probability vectors.

use rand::Rng;

use crate::evidence::{Cause, CauseVector, ALL_CAUSES};

use super::scenario::ClassifierSpec;

/// Draws a noisy cause vector for one detection.
///
/// The reported top cause comes from the confusion row of the true cause
/// (the `none` row on the false-alarm path). The top probability is
/// drawn from the configured band — the wrong-top band when the draw
/// missed the truth — and the remainder is spread over the other causes.
/// Under incident or workzone truths the spread is biased so
/// SpecialEvent ranks second, which is the pattern rule mining later
/// rediscovers. The second-ranked share is capped below the top
/// probability so the drawn top cause always stays the argmax.
pub fn classify_surrogate<R: Rng>(
    truth: Option<Cause>,
    spec: &ClassifierSpec,
    rng: &mut R,
) -> CauseVector {
    let row = match truth {
        Some(c) => &spec.confusion[c.index()],
        None => &spec.none_row,
    };

    // categorical draw of the reported top cause
    let mut u: f64 = rng.gen();
    let mut top = Cause::Recurrent;
    for c in ALL_CAUSES {
        let p = row[c.index()];
        if u < p {
            top = c;
            break;
        }
        u -= p;
    }

    let band = match truth {
        Some(t) if t != top => spec.wrong_top_band,
        _ => spec.top_band,
    };
    let p_top = rng.gen_range(band.0..=band.1);
    let remainder = 1.0 - p_top;

    // weights for the four other causes
    let others: Vec<Cause> = ALL_CAUSES.into_iter().filter(|c| *c != top).collect();
    let mut weights = [0.0f64; 4];
    for w in weights.iter_mut() {
        *w = rng.gen_range(0.2..=1.0);
    }
    // when the top draw missed the truth, the truth often rides second;
    // otherwise incident/workzone truths rank SpecialEvent second
    let boost = |weights: &mut [f64; 4], favored: Cause, rng: &mut R| {
        let max_other = weights
            .iter()
            .zip(&others)
            .filter(|(_, c)| **c != favored)
            .map(|(w, _)| *w)
            .fold(0.0, f64::max);
        let idx = others
            .iter()
            .position(|c| *c == favored)
            .expect("favored cause is among the others");
        weights[idx] = max_other * (1.5 + 0.5 * rng.gen::<f64>());
    };
    match truth {
        Some(t) if t != top => {
            if rng.gen::<f64>() < spec.truth_second_bias {
                boost(&mut weights, t, rng);
            } else if matches!(t, Cause::Incident | Cause::Workzone)
                && top != Cause::SpecialEvent
                && rng.gen::<f64>() < spec.se_second_bias
            {
                boost(&mut weights, Cause::SpecialEvent, rng);
            }
        }
        Some(t) => {
            if matches!(t, Cause::Incident | Cause::Workzone)
                && top != Cause::SpecialEvent
                && rng.gen::<f64>() < spec.se_second_bias
            {
                boost(&mut weights, Cause::SpecialEvent, rng);
            }
        }
        None => {}
    }

    let total: f64 = weights.iter().sum();
    let mut shares = [0.0f64; 4];
    for (s, w) in shares.iter_mut().zip(&weights) {
        *s = remainder * w / total;
    }

    // keep the second rank strictly below the top probability
    let eps = 1e-3;
    let max_share = shares.iter().copied().fold(0.0, f64::max);
    if max_share > p_top - eps {
        let uniform = remainder / 4.0;
        let t = (p_top - eps - uniform) / (max_share - uniform);
        for s in shares.iter_mut() {
            *s = t * *s + (1.0 - t) * uniform;
        }
    }

    let mut p = [0.0f64; 5];
    p[top.index()] = p_top;
    for (share, c) in shares.iter().zip(&others) {
        p[c.index()] = *share;
    }
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    CauseVector::new(p).expect("surrogate construction yields a valid vector")
}
