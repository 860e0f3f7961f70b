//! Inter-agent messaging over email and chat with one-shot channel fallback.
//!
//! Delivered and polled messages are logged in the record-line format:
//! `msg=<id> from=.. to=.. channel=email sent=<minutes> body=..` and
//! `polled=<id> at=<minutes>`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::ids::AgentId;
use crate::planning::PlanUpdateEvent;
use crate::record::Record;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Email,
    Chat,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Email => "email",
            Channel::Chat => "chat",
        }
    }

    pub fn other(self) -> Channel {
        match self {
            Channel::Email => Channel::Chat,
            Channel::Chat => Channel::Email,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_id: u64,
    pub from: AgentId,
    pub to: AgentId,
    pub channel: Channel,
    pub body: String,
    pub sent_at: SimTime,
    pub delivered: bool,
}

/// A message before it is handed to a channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draft {
    pub from: AgentId,
    pub to: AgentId,
    pub channel: Channel,
    pub body: String,
    pub sent_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered(u64),
    ChannelDown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReport {
    pub attempts: Vec<(Channel, SendOutcome)>,
}

impl DeliveryReport {
    pub fn rerouted(&self) -> bool {
        self.attempts.len() > 1
    }

    pub fn delivered(&self) -> Option<(Channel, u64)> {
        self.attempts.iter().find_map(|(c, o)| match o {
            SendOutcome::Delivered(id) => Some((*c, *id)),
            SendOutcome::ChannelDown => None,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommsError {
    #[error("unknown recipient {0}")]
    UnknownRecipient(AgentId),
    #[error("all channels down")]
    AllChannelsDown(DeliveryReport),
}

#[derive(Debug, Clone, Default)]
pub struct Mailboxes {
    queues: BTreeMap<AgentId, [VecDeque<Message>; 2]>,
    down: [bool; 2],
    next_id: u64,
    log: String,
}

impl Mailboxes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, agent: AgentId) {
        self.queues.entry(agent).or_default();
    }

    pub fn set_down(&mut self, channel: Channel, down: bool) {
        self.down[channel.slot()] = down;
    }

    pub fn is_down(&self, channel: Channel) -> bool {
        self.down[channel.slot()]
    }

    pub fn log_text(&self) -> &str {
        &self.log
    }

    pub fn pending(&self, agent: &AgentId) -> usize {
        self.queues.get(agent).map_or(0, |q| q[0].len() + q[1].len())
    }

    pub fn send(&mut self, draft: &Draft) -> Result<SendOutcome, CommsError> {
        if !self.queues.contains_key(&draft.to) {
            return Err(CommsError::UnknownRecipient(draft.to.clone()));
        }
        if self.is_down(draft.channel) {
            return Ok(SendOutcome::ChannelDown);
        }
        self.next_id += 1;
        let msg = Message {
            msg_id: self.next_id,
            from: draft.from.clone(),
            to: draft.to.clone(),
            channel: draft.channel,
            body: draft.body.clone(),
            sent_at: draft.sent_at,
            delivered: true,
        };
        let line = Record::new()
            .with("msg", msg.msg_id.to_string())
            .with("from", msg.from.as_str())
            .with("to", msg.to.as_str())
            .with("channel", msg.channel.name())
            .with("sent", msg.sent_at.minutes().to_string())
            .with("body", &msg.body);
        self.log.push_str(&line.render());
        self.log.push('\n');
        self.queues.get_mut(&draft.to).expect("checked")[draft.channel.slot()].push_back(msg);
        Ok(SendOutcome::Delivered(self.next_id))
    }

    /// Sends on the requested channel and, if it is down, once on the other.
    pub fn send_with_fallback(&mut self, draft: &Draft) -> Result<DeliveryReport, CommsError> {
        let mut report = DeliveryReport { attempts: Vec::new() };
        let first = self.send(draft)?;
        report.attempts.push((draft.channel, first));
        if first == SendOutcome::ChannelDown {
            let alt = Draft {
                channel: draft.channel.other(),
                ..draft.clone()
            };
            let second = self.send(&alt)?;
            report.attempts.push((alt.channel, second));
            if second == SendOutcome::ChannelDown {
                return Err(CommsError::AllChannelsDown(report));
            }
        }
        Ok(report)
    }

    /// Drains every queue of `agent`: all email first, then chat, each FIFO.
    pub fn poll(&mut self, agent: &AgentId, at: SimTime) -> Vec<Message> {
        let Some(q) = self.queues.get_mut(agent) else {
            return Vec::new();
        };
        let [email, chat] = q;
        let out: Vec<Message> = email.drain(..).chain(chat.drain(..)).collect();
        for m in &out {
            let line = Record::new()
                .with("polled", m.msg_id.to_string())
                .with("at", at.minutes().to_string());
            self.log.push_str(&line.render());
            self.log.push('\n');
        }
        out
    }
}

/// One NewInformation event per message.
pub fn to_events(messages: &[Message], at: SimTime) -> Vec<PlanUpdateEvent> {
    messages
        .iter()
        .map(|m| PlanUpdateEvent::info(format!("{} from {} via {}", m.body, m.from, m.channel), None, at))
        .collect()
}

/// Mailboxes shared between agent threads; every operation is atomic.
#[derive(Debug, Clone, Default)]
pub struct SharedMailboxes(Arc<Mutex<Mailboxes>>);

impl SharedMailboxes {
    pub fn new(inner: Mailboxes) -> Self {
        Self(Arc::new(Mutex::new(inner)))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Mailboxes> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register(&self, agent: AgentId) {
        self.lock().register(agent);
    }

    pub fn set_down(&self, channel: Channel, down: bool) {
        self.lock().set_down(channel, down);
    }

    pub fn send_with_fallback(&self, draft: &Draft) -> Result<DeliveryReport, CommsError> {
        self.lock().send_with_fallback(draft)
    }

    pub fn poll(&self, agent: &AgentId, at: SimTime) -> Vec<Message> {
        self.lock().poll(agent, at)
    }

    pub fn snapshot(&self) -> Mailboxes {
        self.lock().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::EventKind;

    fn boxes() -> Mailboxes {
        let mut m = Mailboxes::new();
        m.register("a".into());
        m.register("b".into());
        m
    }

    fn draft(channel: Channel, body: &str) -> Draft {
        Draft {
            from: "a".into(),
            to: "b".into(),
            channel,
            body: body.into(),
            sent_at: SimTime(10),
        }
    }

    #[test]
    fn send_outcomes() {
        let mut m = boxes();
        assert_eq!(m.send(&draft(Channel::Email, "hi")), Ok(SendOutcome::Delivered(1)));
        m.set_down(Channel::Email, true);
        assert_eq!(m.send(&draft(Channel::Email, "hi")), Ok(SendOutcome::ChannelDown));
        let mut d = draft(Channel::Chat, "x");
        d.to = "zed".into();
        assert_eq!(m.send(&d), Err(CommsError::UnknownRecipient("zed".into())));
    }

    #[test]
    fn fallback_matrix() {
        for (email_down, chat_down) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut m = boxes();
            m.set_down(Channel::Email, email_down);
            m.set_down(Channel::Chat, chat_down);
            let r = m.send_with_fallback(&draft(Channel::Email, "status?"));
            match (email_down, chat_down) {
                (false, _) => {
                    let r = r.unwrap();
                    assert!(!r.rerouted());
                    assert_eq!(r.delivered().unwrap().0, Channel::Email);
                }
                (true, false) => {
                    let r = r.unwrap();
                    assert!(r.rerouted());
                    assert_eq!(r.attempts.len(), 2);
                    assert_eq!(r.delivered().unwrap().0, Channel::Chat);
                }
                (true, true) => {
                    let Err(CommsError::AllChannelsDown(r)) = r else { panic!() };
                    assert_eq!(r.attempts.len(), 2);
                }
            }
        }
    }

    #[test]
    fn poll_order_and_events() {
        let mut m = boxes();
        assert!(m.poll(&"b".into(), SimTime(0)).is_empty());
        m.send(&draft(Channel::Chat, "c1")).unwrap();
        m.send(&draft(Channel::Email, "e1")).unwrap();
        m.send(&draft(Channel::Email, "e2")).unwrap();
        let got = m.poll(&"b".into(), SimTime(20));
        let bodies: Vec<&str> = got.iter().map(|x| x.body.as_str()).collect();
        assert_eq!(bodies, vec!["e1", "e2", "c1"]);
        assert!(m.poll(&"b".into(), SimTime(21)).is_empty());
        let events = to_events(&got, SimTime(20));
        assert_eq!(events.len(), 3);
        assert!(events.iter().all(|e| e.kind == EventKind::NewInformation));
        assert_eq!(m.log_text().lines().filter(|l| l.starts_with("polled=")).count(), 3);
    }

    #[test]
    fn shared_mailboxes_lose_nothing_across_threads() {
        let shared = SharedMailboxes::default();
        shared.register("hub".into());
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let s = shared.clone();
                std::thread::spawn(move || {
                    for j in 0..25 {
                        let d = Draft {
                            from: format!("w{i}").into(),
                            to: "hub".into(),
                            channel: if j % 2 == 0 { Channel::Email } else { Channel::Chat },
                            body: format!("{i}-{j}"),
                            sent_at: SimTime(j),
                        };
                        s.send_with_fallback(&d).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let got = shared.poll(&"hub".into(), SimTime(99));
        assert_eq!(got.len(), 100);
        let mut ids: Vec<u64> = got.iter().map(|m| m.msg_id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        // FIFO per (sender, channel)
        for i in 0..4 {
            for ch in [Channel::Email, Channel::Chat] {
                let seq: Vec<&str> = got
                    .iter()
                    .filter(|m| m.from.as_str() == format!("w{i}") && m.channel == ch)
                    .map(|m| m.body.as_str())
                    .collect();
                let mut sorted = seq.clone();
                sorted.sort_by_key(|b| b.split('-').nth(1).unwrap().parse::<u32>().unwrap());
                assert_eq!(seq, sorted);
            }
        }
    }
}
