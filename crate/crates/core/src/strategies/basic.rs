use super::{ArmView, Chooser};
use crate::ledger::TopicId;
use crate::rng::RunRng;
use crate::select::{sample_distinct, top_b};
use rand::Rng;

/// Uniform over topics below the cap.
pub fn brute_choose(view: &ArmView<'_>, rng: &mut RunRng) -> Option<TopicId> {
    BruteChooser.choose(view, rng)
}

/// Explore every topic once, then exploit the best empirical mean below the cap.
pub fn greedy_choose(view: &ArmView<'_>, rng: &mut RunRng) -> Option<TopicId> {
    GreedyChooser.choose(view, rng)
}

pub fn epsilon_greedy_choose(view: &ArmView<'_>, epsilon: f64, rng: &mut RunRng) -> Option<TopicId> {
    EpsilonGreedyChooser { epsilon }.choose(view, rng)
}

/// Greedy restricted to `subset` (a frozen membership mask).
pub fn subset_greedy_choose(view: &ArmView<'_>, subset: &[bool], rng: &mut RunRng) -> Option<TopicId> {
    SubsetGreedyChooser::from_mask(subset.to_vec()).choose(view, rng)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BruteChooser;

impl Chooser for BruteChooser {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
        if b == 1 {
            return view.pick_eligible(rng).into_iter().collect();
        }
        sample_distinct(view.eligible_ids(), b, rng)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyChooser;

pub(super) fn greedy_batch(view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
    if b == 1 {
        return view
            .pick_unsampled(rng)
            .or_else(|| view.pick_best(rng))
            .into_iter()
            .collect();
    }
    let unsampled = view.unsampled();
    let mut out = sample_distinct(unsampled, b, rng);
    if out.len() < b {
        let scored: Vec<(TopicId, f64)> = view.exploit_candidates().collect();
        out.extend(top_b(&scored, b - out.len(), rng));
    }
    out
}

impl Chooser for GreedyChooser {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
        greedy_batch(view, b, rng)
    }
}

/// Explores an unsampled topic with probability `epsilon` while any remain,
/// otherwise exploits. With nothing to exploit it explores.
///
/// In a batch every slot flips its own coin: explore slots take distinct
/// unsampled topics, exploit slots take the top of the exploit ranking.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonGreedyChooser {
    pub epsilon: f64,
}

fn coin(epsilon: f64, rng: &mut RunRng) -> bool {
    if epsilon >= 1.0 {
        true
    } else if epsilon <= 0.0 {
        false
    } else {
        rng.random::<f64>() < epsilon
    }
}

impl Chooser for EpsilonGreedyChooser {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
        if b == 1 {
            let explore = view.has_unsampled() && coin(self.epsilon, rng);
            if !explore {
                if let Some(t) = view.pick_best(rng) {
                    return vec![t];
                }
            }
            return view.pick_unsampled(rng).into_iter().collect();
        }
        let unsampled = view.unsampled();
        let mut explore = 0usize;
        let mut exploit = 0usize;
        for _ in 0..b {
            if explore < unsampled.len() && coin(self.epsilon, rng) {
                explore += 1;
            } else {
                exploit += 1;
            }
        }
        let mut out = Vec::with_capacity(b);
        if exploit > 0 {
            let scored: Vec<(TopicId, f64)> = view.exploit_candidates().collect();
            out = top_b(&scored, exploit, rng);
            explore += exploit - out.len();
        }
        if explore > 0 {
            let mut picked = sample_distinct(unsampled, explore, rng);
            picked.append(&mut out);
            out = picked;
        }
        out
    }
}

/// Greedy over a subset of `ceil(rho * |T|)` topics fixed when the run starts.
#[derive(Debug, Clone)]
pub struct SubsetGreedyChooser {
    member: Vec<bool>,
}

impl SubsetGreedyChooser {
    pub fn new(n_topics: usize, rho: f64, rng: &mut RunRng) -> Self {
        let size = ((rho * n_topics as f64).ceil() as usize).clamp(1, n_topics.max(1));
        let mut member = vec![false; n_topics];
        for t in sample_distinct((0..n_topics).collect(), size, rng) {
            member[t] = true;
        }
        Self { member }
    }

    pub fn from_mask(member: Vec<bool>) -> Self {
        Self { member }
    }

    pub fn members(&self) -> impl Iterator<Item = TopicId> + '_ {
        self.member.iter().enumerate().filter(|(_, &m)| m).map(|(t, _)| t)
    }
}

impl Chooser for SubsetGreedyChooser {
    fn choose_batch(&mut self, view: &ArmView<'_>, b: usize, rng: &mut RunRng) -> Vec<TopicId> {
        let blocked: Vec<bool> = view
            .blocked
            .iter()
            .zip(&self.member)
            .map(|(&blocked, &member)| blocked || !member)
            .collect();
        let restricted = ArmView::new(view.ledger, view.cap, &blocked);
        greedy_batch(&restricted, b, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::Ledger;
    use crate::strategies::Cap;
    use rand::SeedableRng;

    fn rng(seed: u64) -> RunRng {
        RunRng::seed_from_u64(seed)
    }

    fn ledger_with(means: &[Option<f64>]) -> Ledger {
        let mut l = Ledger::new(means.len());
        for (t, m) in means.iter().enumerate() {
            if let Some(m) = m {
                l.record_value(t, *m).unwrap();
            }
        }
        l
    }

    #[test]
    fn brute_single_eligible() {
        let mut l = Ledger::new(3);
        l.record_value(0, 1.0).unwrap();
        l.record_value(2, 1.0).unwrap();
        let blocked = vec![false; 3];
        let mut l2 = l.clone();
        l2.record_value(1, 1.0).unwrap();
        l2.record_value(1, 1.0).unwrap();
        let view = ArmView::new(&l2, Cap::Bounded(2), &blocked);
        // topic 1 is capped, 0 and 2 each have one pull
        for _ in 0..100 {
            assert_ne!(brute_choose(&view, &mut rng(1)), Some(1));
        }
        let mut l3 = l2.clone();
        l3.record_value(0, 1.0).unwrap();
        let view = ArmView::new(&l3, Cap::Bounded(2), &blocked);
        assert_eq!(brute_choose(&view, &mut rng(1)), Some(2));
    }

    #[test]
    fn brute_is_uniform() {
        let l = Ledger::new(4);
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Bounded(5), &blocked);
        let mut r = rng(5);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            hits[brute_choose(&view, &mut r).unwrap()] += 1;
        }
        for h in hits {
            assert!((h as f64 / 40_000.0 - 0.25).abs() < 0.01, "{hits:?}");
        }
    }

    #[test]
    fn brute_never_returns_capped_topic() {
        let mut l = Ledger::new(4);
        for _ in 0..3 {
            l.record_value(2, 5.0).unwrap();
        }
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Bounded(3), &blocked);
        let mut r = rng(9);
        for _ in 0..10_000 {
            assert_ne!(brute_choose(&view, &mut r), Some(2));
        }
    }

    #[test]
    fn all_capped_signals_no_eligible() {
        let l = ledger_with(&[Some(1.0), Some(2.0)]);
        let blocked = vec![false; 2];
        let view = ArmView::new(&l, Cap::Bounded(1), &blocked);
        let mut r = rng(0);
        assert_eq!(brute_choose(&view, &mut r), None);
        assert_eq!(greedy_choose(&view, &mut r), None);
        assert_eq!(epsilon_greedy_choose(&view, 0.5, &mut r), None);
    }

    #[test]
    fn greedy_forced_exploration() {
        let l = ledger_with(&[Some(50.0), None, Some(90.0)]);
        let blocked = vec![false; 3];
        let view = ArmView::new(&l, Cap::Unbounded, &blocked);
        assert_eq!(greedy_choose(&view, &mut rng(2)), Some(1));
    }

    #[test]
    fn greedy_argmax_and_cap_fallback() {
        let l = ledger_with(&[Some(10.0), Some(20.0), Some(15.0)]);
        let blocked = vec![false; 3];
        let view = ArmView::new(&l, Cap::Bounded(5), &blocked);
        assert_eq!(greedy_choose(&view, &mut rng(2)), Some(1));
        let view = ArmView::new(&l, Cap::Bounded(1), &blocked);
        assert_eq!(greedy_choose(&view, &mut rng(2)), None);
        let mut capped = l.clone();
        for _ in 0..4 {
            capped.record_value(1, 20.0).unwrap();
        }
        let view = ArmView::new(&capped, Cap::Bounded(5), &blocked);
        assert_eq!(greedy_choose(&view, &mut rng(2)), Some(2));
    }

    #[test]
    fn greedy_batch_is_top_b() {
        let l = ledger_with(&[Some(5.0), Some(25.0), Some(15.0), Some(20.0), Some(10.0)]);
        let blocked = vec![false; 5];
        let view = ArmView::new(&l, Cap::Bounded(10), &blocked);
        assert_eq!(GreedyChooser.choose_batch(&view, 3, &mut rng(4)), vec![1, 3, 2]);
    }

    #[test]
    fn epsilon_one_always_explores_like_greedy() {
        let l = ledger_with(&[Some(99.0), None, None, Some(1.0), None]);
        let blocked = vec![false; 5];
        let view = ArmView::new(&l, Cap::Unbounded, &blocked);
        for seed in 0..200 {
            let e = epsilon_greedy_choose(&view, 1.0, &mut rng(seed));
            let g = greedy_choose(&view, &mut rng(seed));
            assert_eq!(e, g);
            assert!(matches!(e, Some(1 | 2 | 4)));
        }
    }

    #[test]
    fn epsilon_zero_never_explores_once_sampled() {
        let l = ledger_with(&[Some(3.0), None, Some(7.0), None]);
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Unbounded, &blocked);
        let mut r = rng(1);
        for _ in 0..10_000 {
            assert_eq!(epsilon_greedy_choose(&view, 0.0, &mut r), Some(2));
        }
    }

    #[test]
    fn epsilon_exploit_with_nothing_sampled_explores() {
        let l = Ledger::new(3);
        let blocked = vec![false; 3];
        let view = ArmView::new(&l, Cap::Bounded(2), &blocked);
        assert!(epsilon_greedy_choose(&view, 0.0, &mut rng(0)).is_some());
    }

    #[test]
    fn epsilon_exploration_frequency() {
        let l = ledger_with(&[Some(1.0), None, None, None]);
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Unbounded, &blocked);
        let mut r = rng(77);
        let trials = 100_000;
        let explored = (0..trials)
            .filter(|_| epsilon_greedy_choose(&view, 0.7, &mut r) != Some(0))
            .count();
        assert!((explored as f64 / trials as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn subset_full_matches_greedy() {
        let l = ledger_with(&[Some(1.0), None, Some(4.0), Some(4.0)]);
        let blocked = vec![false; 4];
        let view = ArmView::new(&l, Cap::Unbounded, &blocked);
        let mut setup = rng(100);
        let mut sub = SubsetGreedyChooser::new(4, 1.0, &mut setup);
        for seed in 0..100 {
            assert_eq!(sub.choose(&view, &mut rng(seed)), greedy_choose(&view, &mut rng(seed)));
        }
    }

    #[test]
    fn subset_singleton() {
        let mut setup = rng(3);
        let sub = SubsetGreedyChooser::new(10, 0.1, &mut setup);
        assert_eq!(sub.members().count(), 1);
        let sub = SubsetGreedyChooser::new(10, 0.25, &mut setup);
        assert_eq!(sub.members().count(), 3);
    }
}
