//! Simulated channels.
//!
//! Two channel classes: [`ChannelKind::LocalOrdered`] delivers FIFO exactly
//! once at the next tick; [`ChannelKind::NetworkAdversarial`] reorders,
//! duplicates, batches, and delays under a fixed seed, but never drops —
//! every message is delivered at least once within `max_delay_ticks`.
//!
//! All randomness comes from ChaCha8 streams derived from the channel seed
//! and the message sequence number, so a (seed, enqueue sequence) pair fully
//! determines every schedule. ChaCha8 is the one generator used anywhere in
//! this crate, keeping runs reproducible across platforms.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thiserror::Error;

/// Delivery semantics of one channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// FIFO, exactly-once, next-tick delivery.
    LocalOrdered,
    /// Seeded reordering, duplication, batching, and finite delay.
    NetworkAdversarial(AdversarialParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialParams {
    pub seed: u64,
    /// Upper bound on delivery delay; every copy lands within
    /// `enqueue_tick + max_delay_ticks`. At least 1.
    pub max_delay_ticks: u64,
    /// Probability of each extra copy, in [0, 1].
    pub dup_prob: f64,
    /// Cap on total deliveries of one message. At least 1.
    pub max_dups: u32,
    /// Probability that a message joins the previous message's delivery
    /// tick, in [0, 1].
    pub batch_prob: f64,
}

impl Default for AdversarialParams {
    fn default() -> Self {
        AdversarialParams {
            seed: 0,
            max_delay_ticks: 4,
            dup_prob: 0.25,
            max_dups: 2,
            batch_prob: 0.25,
        }
    }
}

impl AdversarialParams {
    fn validate(&self) -> Self {
        let mut p = self.clone();
        p.max_delay_ticks = p.max_delay_ticks.max(1);
        p.max_dups = p.max_dups.max(1);
        p.dup_prob = p.dup_prob.clamp(0.0, 1.0);
        p.batch_prob = p.batch_prob.clamp(0.0, 1.0);
        p
    }
}

/// The delivery plan for one enqueued message: each copy's tick, derived
/// deterministically from (channel seed, message sequence number).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub seq: u64,
    pub enqueue_tick: u64,
    pub deliveries: Vec<(u64, u32)>,
}

/// Draw below a probability threshold using integer comparison, so prob=1.0
/// always fires and prob=0.0 never does.
fn hit(rng: &mut ChaCha8Rng, prob: f64) -> bool {
    let threshold = (prob * 4_294_967_296.0) as u64;
    (rng.random::<u32>() as u64) < threshold
}

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 step over seed ^ salt; cheap stream separation.
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One simulated channel carrying opaque messages of type `M`.
#[derive(Debug, Clone)]
pub struct Channel<M> {
    kind: ChannelKind,
    next_seq: u64,
    /// Pending deliveries: tick -> (seq, copy) -> message.
    pending: BTreeMap<u64, BTreeMap<(u64, u32), M>>,
    /// Tick of the most recent schedule, the batching anchor.
    last_deliver_tick: Option<u64>,
    /// Log of computed schedules, for `--dump-schedules`.
    schedules: Vec<Schedule>,
}

impl<M: Clone> Channel<M> {
    pub fn new(kind: ChannelKind) -> Self {
        let kind = match kind {
            ChannelKind::NetworkAdversarial(p) => ChannelKind::NetworkAdversarial(p.validate()),
            k => k,
        };
        Channel {
            kind,
            next_seq: 0,
            pending: BTreeMap::new(),
            last_deliver_tick: None,
            schedules: Vec::new(),
        }
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    /// Accepts a message at `now_tick` and plans its deliveries.
    pub fn enqueue(&mut self, msg: M, now_tick: u64) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let deliveries = match &self.kind {
            ChannelKind::LocalOrdered => vec![(now_tick + 1, 0)],
            ChannelKind::NetworkAdversarial(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(p.seed, seq));
                let mut copies = 1u32;
                for _ in 1..p.max_dups {
                    if hit(&mut rng, p.dup_prob) {
                        copies += 1;
                    }
                }
                let joins_batch = hit(&mut rng, p.batch_prob);
                let mut deliveries = Vec::new();
                for copy in 0..copies {
                    let tick = if copy == 0 && joins_batch {
                        match self.last_deliver_tick {
                            Some(t) => t.clamp(now_tick + 1, now_tick + p.max_delay_ticks),
                            None => now_tick + 1 + rng.random_range(0..p.max_delay_ticks),
                        }
                    } else {
                        now_tick + 1 + rng.random_range(0..p.max_delay_ticks)
                    };
                    deliveries.push((tick, copy));
                }
                self.last_deliver_tick = Some(deliveries[0].0);
                deliveries
            }
        };
        for &(tick, copy) in &deliveries {
            self.pending.entry(tick).or_default().insert((seq, copy), msg.clone());
        }
        self.schedules.push(Schedule { seq, enqueue_tick: now_tick, deliveries });
    }

    /// Releases every copy scheduled at or before `now_tick`. Within one
    /// scheduled tick, adversarial channels release in a seeded shuffle;
    /// local channels release in sequence order.
    pub fn deliverable(&mut self, now_tick: u64) -> Vec<M> {
        let due: Vec<u64> = self
            .pending
            .range(..=now_tick)
            .map(|(&tick, _)| tick)
            .collect();
        let mut out = Vec::new();
        for tick in due {
            let bucket = self.pending.remove(&tick).unwrap();
            let mut batch: Vec<M> = bucket.into_values().collect();
            if let ChannelKind::NetworkAdversarial(p) = &self.kind {
                if batch.len() > 1 {
                    shuffle(&mut batch, mix(p.seed, tick ^ 0x5bd1_e995));
                }
            }
            out.append(&mut batch);
        }
        out
    }

    /// True when no copy remains undelivered (duplicates included).
    pub fn is_drained(&self) -> bool {
        self.pending.is_empty()
    }

    /// The earliest tick with a pending copy.
    pub fn next_pending_tick(&self) -> Option<u64> {
        self.pending.keys().next().copied()
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }
}

fn shuffle<M>(items: &mut [M], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("schedule enumeration bounds exceeded: {0}")]
pub struct BoundsExceeded(pub String);

/// Enumerates every delivery order of `n` messages where each message may
/// additionally be duplicated up to `max_dups` times (at most 1). Each
/// element is a sequence of message indices. Oracle support for exhaustive
/// small-instance checks.
///
/// The count is `sum over dup-subsets D of (n + |D|)! / 2^|D|`: permutations
/// of the delivery multiset.
pub fn enumerate_small_schedules(
    n_messages: usize,
    max_dups: u32,
) -> Result<Vec<Vec<usize>>, BoundsExceeded> {
    if n_messages > 5 {
        return Err(BoundsExceeded(format!("n_messages {n_messages} > 5")));
    }
    if max_dups > 1 {
        return Err(BoundsExceeded(format!("max_dups {max_dups} > 1")));
    }
    let mut out = Vec::new();
    for dup_mask in 0..(1u32 << (n_messages as u32 * max_dups.min(1))) {
        let mut multiset = Vec::new();
        for i in 0..n_messages {
            multiset.push(i);
            if dup_mask & (1 << i) != 0 {
                multiset.push(i);
            }
        }
        permute_distinct(&mut multiset, 0, &mut out);
        if max_dups == 0 {
            break;
        }
    }
    Ok(out)
}

/// Collects all distinct permutations of `items` (which may hold repeats).
fn permute_distinct(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == items.len() {
        out.push(items.clone());
        return;
    }
    let mut seen = Vec::new();
    for i in start..items.len() {
        if seen.contains(&items[i]) {
            continue;
        }
        seen.push(items[i]);
        items.swap(start, i);
        permute_distinct(items, start + 1, out);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adversarial(seed: u64, dup_prob: f64, max_dups: u32) -> ChannelKind {
        ChannelKind::NetworkAdversarial(AdversarialParams {
            seed,
            max_delay_ticks: 4,
            dup_prob,
            max_dups,
            batch_prob: 0.25,
        })
    }

    #[test]
    fn local_ordered_is_fifo_next_tick() {
        let mut ch = Channel::new(ChannelKind::LocalOrdered);
        ch.enqueue("m1", 0);
        ch.enqueue("m2", 0);
        assert_eq!(ch.deliverable(0), Vec::<&str>::new());
        assert_eq!(ch.deliverable(1), vec!["m1", "m2"]);
        assert!(ch.is_drained());
    }

    #[test]
    fn dup_prob_one_delivers_exactly_max_dups_copies() {
        let mut ch = Channel::new(adversarial(7, 1.0, 2));
        ch.enqueue("m1", 0);
        let sched = &ch.schedules()[0];
        assert_eq!(sched.deliveries.len(), 2);
        assert!(sched.deliveries.iter().all(|&(t, _)| (1..=4).contains(&t)));
        let mut seen = Vec::new();
        for tick in 0..=4 {
            seen.extend(ch.deliverable(tick));
        }
        assert_eq!(seen, vec!["m1", "m1"]);
        assert!(ch.is_drained());
    }

    #[test]
    fn every_message_is_eventually_delivered() {
        for seed in 0..20 {
            let mut ch = Channel::new(adversarial(seed, 0.5, 3));
            for i in 0..10u32 {
                ch.enqueue(i, u64::from(i));
            }
            let mut seen = Vec::new();
            for tick in 0..40 {
                seen.extend(ch.deliverable(tick));
            }
            assert!(ch.is_drained());
            for i in 0..10 {
                assert!(seen.contains(&i), "seed {seed} lost message {i}");
            }
        }
    }

    #[test]
    fn schedules_are_deterministic_in_seed_and_sequence() {
        let run = |seed| {
            let mut ch = Channel::new(adversarial(seed, 0.5, 2));
            for i in 0..20u32 {
                ch.enqueue(i, u64::from(i / 3));
            }
            let mut order = Vec::new();
            for tick in 0..40 {
                order.extend(ch.deliverable(tick));
            }
            order
        };
        assert_eq!(run(3), run(3));
        // Different seeds: same payload multiset up to duplication,
        // different order with overwhelming likelihood.
        let a = run(3);
        let b = run(4);
        for i in 0..20 {
            assert!(a.contains(&i) && b.contains(&i));
        }
        assert_ne!(a, b);
    }

    #[test]
    fn delay_bound_is_respected() {
        for seed in 0..50 {
            let mut ch = Channel::new(ChannelKind::NetworkAdversarial(AdversarialParams {
                seed,
                max_delay_ticks: 3,
                dup_prob: 1.0,
                max_dups: 3,
                batch_prob: 1.0,
            }));
            ch.enqueue("m", 10);
            for sched in ch.schedules() {
                for &(tick, _) in &sched.deliveries {
                    assert!(tick > 10 && tick <= 13, "seed {seed}: tick {tick}");
                }
            }
        }
    }

    #[test]
    fn local_ordered_equals_degenerate_adversarial() {
        // delay 1, no dups: one message per tick must flow identically.
        let params = AdversarialParams {
            seed: 9,
            max_delay_ticks: 1,
            dup_prob: 0.0,
            max_dups: 1,
            batch_prob: 0.0,
        };
        let mut local = Channel::new(ChannelKind::LocalOrdered);
        let mut degen = Channel::new(ChannelKind::NetworkAdversarial(params));
        let mut got_local = Vec::new();
        let mut got_degen = Vec::new();
        for tick in 0..10u64 {
            local.enqueue(tick, tick);
            degen.enqueue(tick, tick);
            got_local.extend(local.deliverable(tick));
            got_degen.extend(degen.deliverable(tick));
        }
        got_local.extend(local.deliverable(10));
        got_degen.extend(degen.deliverable(10));
        assert_eq!(got_local, got_degen);
    }

    #[test]
    fn enumerate_counts_match_closed_form() {
        assert_eq!(enumerate_small_schedules(0, 0).unwrap(), vec![Vec::<usize>::new()]);
        assert_eq!(enumerate_small_schedules(2, 0).unwrap().len(), 2);
        // sum over dup-subsets D of (n+|D|)!/2^|D|, n=2:
        // 2! + 2*(3!/2) + 4!/4 = 2 + 6 + 6 = 14
        assert_eq!(enumerate_small_schedules(2, 1).unwrap().len(), 14);
        // n=3: 3! + 3*4!/2 + 3*5!/4 + 6!/8 = 6 + 36 + 90 + 90 = 222
        assert_eq!(enumerate_small_schedules(3, 1).unwrap().len(), 222);
        assert!(enumerate_small_schedules(6, 0).is_err());
        assert!(enumerate_small_schedules(2, 2).is_err());
    }

    #[test]
    fn enumerated_schedules_deliver_everything_at_least_once() {
        for sched in enumerate_small_schedules(3, 1).unwrap() {
            for i in 0..3 {
                assert!(sched.contains(&i));
            }
        }
    }
}
