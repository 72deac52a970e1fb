//! In-process topic bus with conflating (`Latest`) and bounded-queue
//! delivery.
//!
//! Each subscriber owns its own mailbox, so one slow consumer never affects
//! another. A topic also keeps a retained mailbox that is copied into
//! subscribers attaching later, so publishing before anyone listens is not an
//! error and loses nothing beyond what the policy drops.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("topic `{0}` already exists")]
    DuplicateTopic(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("queue capacity must be >= 1")]
    ZeroCapacity,
    #[error("capture timestamp {capture_ns} is after publish time {publish_ns}")]
    CaptureAfterPublish { capture_ns: u64, publish_ns: u64 },
    #[error("unknown pipeline stage `{0}`")]
    UnknownStage(String),
    #[error(
        "stage {stage} of seq {seq} at {t_ns} ns is out of order with {other} at {other_ns} ns"
    )]
    Ordering {
        seq: u64,
        stage: String,
        t_ns: u64,
        other: String,
        other_ns: u64,
    },
    #[error("stage {stage} already recorded for seq {seq}")]
    DuplicateStage { seq: u64, stage: String },
    #[error("run log line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicPolicy {
    /// Keep only the newest unread message.
    Latest,
    /// Keep up to `n` unread messages, dropping the oldest on overflow.
    Queue(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub topic: Arc<str>,
    pub payload: T,
    pub seq: u64,
    pub publish_ns: u64,
    pub capture_ns: u64,
}

#[derive(Debug)]
struct Mailbox<T> {
    policy: TopicPolicy,
    unread: VecDeque<Envelope<T>>,
    dropped: u64,
}

impl<T: Clone> Mailbox<T> {
    fn new(policy: TopicPolicy) -> Self {
        Self {
            policy,
            unread: VecDeque::new(),
            dropped: 0,
        }
    }

    fn push(&mut self, env: Envelope<T>) {
        let cap = match self.policy {
            TopicPolicy::Latest => 1,
            TopicPolicy::Queue(n) => n,
        };
        while self.unread.len() >= cap {
            self.unread.pop_front();
            self.dropped += 1;
        }
        self.unread.push_back(env);
    }
}

struct TopicState<T> {
    name: Arc<str>,
    policy: TopicPolicy,
    next_seq: u64,
    retained: Mailbox<T>,
    subscribers: Vec<Arc<Mutex<Mailbox<T>>>>,
}

/// Cheap, clonable name of an existing topic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicHandle {
    name: Arc<str>,
}

impl TopicHandle {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// One consumer's view of a topic. Use from one task at a time.
pub struct Subscriber<T> {
    topic: Arc<str>,
    mailbox: Arc<Mutex<Mailbox<T>>>,
}

impl<T: Clone> Subscriber<T> {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Newest unread envelope; anything older that is still unread is
    /// discarded (and counted as dropped).
    pub fn take_latest(&self) -> Option<Envelope<T>> {
        let mut mb = self.mailbox.lock().unwrap();
        let newest = mb.unread.pop_back()?;
        mb.dropped += mb.unread.len() as u64;
        mb.unread.clear();
        Some(newest)
    }

    /// Oldest unread envelope, for in-order consumption of queue topics.
    pub fn take_next(&self) -> Option<Envelope<T>> {
        self.mailbox.lock().unwrap().unread.pop_front()
    }

    pub fn pending(&self) -> usize {
        self.mailbox.lock().unwrap().unread.len()
    }

    pub fn dropped(&self) -> u64 {
        self.mailbox.lock().unwrap().dropped
    }
}

pub struct Bus<T> {
    clock: Arc<dyn Clock>,
    topics: Mutex<BTreeMap<Arc<str>, TopicState<T>>>,
}

impl<T: Clone> Bus<T> {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            topics: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn create_topic(&self, name: &str, policy: TopicPolicy) -> Result<TopicHandle, BusError> {
        if policy == TopicPolicy::Queue(0) {
            return Err(BusError::ZeroCapacity);
        }
        let mut topics = self.topics.lock().unwrap();
        if topics.contains_key(name) {
            return Err(BusError::DuplicateTopic(name.to_string()));
        }
        let name: Arc<str> = Arc::from(name);
        topics.insert(
            name.clone(),
            TopicState {
                name: name.clone(),
                policy,
                next_seq: 1,
                retained: Mailbox::new(policy),
                subscribers: Vec::new(),
            },
        );
        Ok(TopicHandle { name })
    }

    pub fn subscribe(&self, topic: &TopicHandle) -> Result<Subscriber<T>, BusError> {
        let mut topics = self.topics.lock().unwrap();
        let state = topics
            .get_mut(topic.name())
            .ok_or_else(|| BusError::UnknownTopic(topic.name().to_string()))?;
        let mut mb = Mailbox::new(state.policy);
        for env in &state.retained.unread {
            mb.push(env.clone());
        }
        let mailbox = Arc::new(Mutex::new(mb));
        state.subscribers.push(mailbox.clone());
        Ok(Subscriber {
            topic: state.name.clone(),
            mailbox,
        })
    }

    /// Publishes at the clock's current time and returns the sequence number.
    pub fn publish(
        &self,
        topic: &TopicHandle,
        payload: T,
        capture_ns: u64,
    ) -> Result<u64, BusError> {
        let publish_ns = self.clock.now_ns();
        if capture_ns > publish_ns {
            return Err(BusError::CaptureAfterPublish {
                capture_ns,
                publish_ns,
            });
        }
        let mut topics = self.topics.lock().unwrap();
        let state = topics
            .get_mut(topic.name())
            .ok_or_else(|| BusError::UnknownTopic(topic.name().to_string()))?;
        let seq = state.next_seq;
        state.next_seq += 1;
        let env = Envelope {
            topic: state.name.clone(),
            payload,
            seq,
            publish_ns,
            capture_ns,
        };
        for sub in &state.subscribers {
            sub.lock().unwrap().push(env.clone());
        }
        state.retained.push(env);
        Ok(seq)
    }

    /// Messages dropped from the retained mailbox (i.e. by the policy,
    /// independent of any subscriber).
    pub fn retained_dropped(&self, topic: &TopicHandle) -> Result<u64, BusError> {
        let topics = self.topics.lock().unwrap();
        topics
            .get(topic.name())
            .map(|s| s.retained.dropped)
            .ok_or_else(|| BusError::UnknownTopic(topic.name().to_string()))
    }

    pub fn retained_seqs(&self, topic: &TopicHandle) -> Result<Vec<u64>, BusError> {
        let topics = self.topics.lock().unwrap();
        topics
            .get(topic.name())
            .map(|s| s.retained.unread.iter().map(|e| e.seq).collect())
            .ok_or_else(|| BusError::UnknownTopic(topic.name().to_string()))
    }
}
