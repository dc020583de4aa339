use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemKind {
    Reflection,
    RetrievedMemory,
    Thought,
    Emotion,
    /// A stimulus together with the reply to it.
    Turn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextItem {
    pub id: u64,
    pub kind: ItemKind,
    pub turn: usize,
    pub text: String,
    /// The reply, for turn items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// The long-term record, for retrieved memories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_index: Option<String>,
}

/// Bounded context buffer. Pushing past capacity evicts the oldest items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    capacity: usize,
    items: VecDeque<ContextItem>,
}

impl WorkingMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "working memory needs room for one item");
        Self {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ContextItem> {
        self.items.iter()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.items.iter().any(|i| i.id == id)
    }

    #[must_use = "evicted items must go to short-term memory"]
    fn push(&mut self, item: ContextItem) -> Vec<ContextItem> {
        self.items.push_back(item);
        let mut evicted = Vec::new();
        while self.items.len() > self.capacity {
            evicted.push(self.items.pop_front().expect("non-empty"));
        }
        evicted
    }

    fn take_where(&mut self, pred: impl Fn(&ContextItem) -> bool) -> Vec<ContextItem> {
        let (taken, kept): (Vec<_>, Vec<_>) = self.items.drain(..).partition(|i| pred(i));
        self.items = kept.into();
        taken
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShortTermItem {
    pub item: ContextItem,
    pub accesses: u32,
    pub stored_turn: usize,
    pub last_access_turn: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    items: Vec<ShortTermItem>,
}

impl ShortTermMemory {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ShortTermItem] {
        &self.items
    }

    pub fn find(&self, id: u64) -> Option<&ShortTermItem> {
        self.items.iter().find(|i| i.item.id == id)
    }

    /// Turn items accessed at least `threshold` times.
    pub fn eligible(&self, threshold: u32) -> Vec<&ShortTermItem> {
        self.items
            .iter()
            .filter(|i| i.item.kind == ItemKind::Turn && i.accesses >= threshold)
            .collect()
    }

    fn store(&mut self, item: ContextItem, turn: usize) {
        // An item recalled earlier keeps its access history when it returns.
        if let Some(existing) = self.items.iter_mut().find(|i| i.item.id == item.id) {
            existing.item = item;
            return;
        }
        self.items.push(ShortTermItem {
            item,
            accesses: 0,
            stored_turn: turn,
            last_access_turn: None,
        });
    }

    fn remove(&mut self, id: u64) -> Option<ShortTermItem> {
        let pos = self.items.iter().position(|i| i.item.id == id)?;
        Some(self.items.remove(pos))
    }
}

/// Counters behind the conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemoryLedger {
    pub entered_working: u64,
    pub moved_to_short_term: u64,
    pub recalled: u64,
    pub rehearsed: u64,
}

/// Working and short-term memory of one session. Items only leave working
/// memory by moving to short-term memory, and only leave short-term memory by
/// being recalled or rehearsed into long-term memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemorySystem {
    pub working: WorkingMemory,
    pub short_term: ShortTermMemory,
    /// Access count at which a short-term turn becomes eligible for rehearsal.
    pub rehearsal_threshold: u32,
    pub ledger: MemoryLedger,
    /// Short-term items that returned to working memory, kept so a recall
    /// can resume the access count.
    #[serde(default)]
    recalled_history: Vec<ShortTermItem>,
    next_id: u64,
}

impl MemorySystem {
    pub fn new(capacity: usize, rehearsal_threshold: u32) -> Self {
        Self {
            working: WorkingMemory::new(capacity),
            short_term: ShortTermMemory::default(),
            rehearsal_threshold,
            ledger: MemoryLedger::default(),
            recalled_history: Vec::new(),
            next_id: 0,
        }
    }

    /// Adds a new item to working memory; returns its id and the ids moved to
    /// short-term memory.
    pub fn add(&mut self, kind: ItemKind, turn: usize, text: &str) -> (u64, Vec<u64>) {
        self.add_item(kind, turn, text, None, None)
    }

    pub fn add_item(
        &mut self,
        kind: ItemKind,
        turn: usize,
        text: &str,
        reply: Option<String>,
        memory_index: Option<String>,
    ) -> (u64, Vec<u64>) {
        let id = self.next_id;
        self.next_id += 1;
        let item = ContextItem {
            id,
            kind,
            turn,
            text: text.to_string(),
            reply,
            memory_index,
        };
        (id, self.enter(item, turn))
    }

    fn enter(&mut self, item: ContextItem, turn: usize) -> Vec<u64> {
        self.ledger.entered_working += 1;
        let evicted = self.working.push(item);
        self.spill_to_short_term(evicted, turn)
    }

    fn spill_to_short_term(&mut self, items: Vec<ContextItem>, turn: usize) -> Vec<u64> {
        let ids = items.iter().map(|i| i.id).collect();
        for item in items {
            self.ledger.moved_to_short_term += 1;
            let history = self
                .recalled_history
                .iter()
                .position(|h| h.item.id == item.id)
                .map(|p| self.recalled_history.remove(p));
            match history {
                Some(mut h) => {
                    h.item = item;
                    self.short_term.items.push(h);
                }
                None => self.short_term.store(item, turn),
            }
        }
        ids
    }

    /// Moves a short-term item back into working memory, counting an access.
    /// Returns the ids this pushed out to short-term memory.
    pub fn recall(&mut self, id: u64, turn: usize) -> Option<Vec<u64>> {
        let mut st = self.short_term.remove(id)?;
        st.accesses += 1;
        st.last_access_turn = Some(turn);
        self.ledger.recalled += 1;
        let item = st.item.clone();
        self.recalled_history.push(st);
        Some(self.enter(item, turn))
    }

    /// Access count of an item wherever it currently is.
    pub fn accesses(&self, id: u64) -> Option<u32> {
        self.short_term
            .find(id)
            .or_else(|| self.recalled_history.iter().find(|h| h.item.id == id))
            .map(|h| h.accesses)
            .or_else(|| self.working.contains(id).then_some(0))
    }

    /// Moves every working item matching `pred` to short-term memory.
    pub fn expire(&mut self, turn: usize, pred: impl Fn(&ContextItem) -> bool) -> Vec<u64> {
        let taken = self.working.take_where(pred);
        self.spill_to_short_term(taken, turn)
    }

    /// Moves everything in working memory to short-term memory.
    pub fn flush_working(&mut self, turn: usize) -> Vec<u64> {
        self.expire(turn, |_| true)
    }

    /// Removes a short-term item after it has become a long-term record.
    pub fn mark_rehearsed(&mut self, id: u64) -> Option<ShortTermItem> {
        let item = self.short_term.remove(id)?;
        self.ledger.rehearsed += 1;
        Some(item)
    }

    pub fn eligible(&self) -> Vec<ContextItem> {
        self.short_term
            .eligible(self.rehearsal_threshold)
            .into_iter()
            .map(|i| i.item.clone())
            .collect()
    }

    /// Every short-term turn item, regardless of access count.
    pub fn all_short_term_turns(&self) -> Vec<ContextItem> {
        self.short_term
            .items
            .iter()
            .filter(|i| i.item.kind == ItemKind::Turn)
            .map(|i| i.item.clone())
            .collect()
    }

    pub fn find_short_term_memory(&self, memory_index: &str) -> Option<u64> {
        self.short_term
            .items
            .iter()
            .find(|i| i.item.memory_index.as_deref() == Some(memory_index))
            .map(|i| i.item.id)
    }

    pub fn find_working_memory(&self, memory_index: &str) -> Option<u64> {
        self.working
            .items()
            .find(|i| i.memory_index.as_deref() == Some(memory_index))
            .map(|i| i.id)
    }

    /// `entered = in working + moved out` and
    /// `moved out = in short-term + recalled + rehearsed`.
    pub fn conserved(&self) -> bool {
        let l = &self.ledger;
        l.entered_working == self.working.len() as u64 + l.moved_to_short_term
            && l.moved_to_short_term == self.short_term.len() as u64 + l.recalled + l.rehearsed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_two_four_items() {
        let mut m = MemorySystem::new(2, 2);
        let mut moved = Vec::new();
        for k in [ItemKind::RetrievedMemory, ItemKind::Thought, ItemKind::Emotion, ItemKind::Turn] {
            moved.extend(m.add(k, 1, "x").1);
        }
        assert_eq!(moved, vec![0, 1]);
        assert_eq!(m.working.len(), 2);
        assert_eq!(m.short_term.len(), 2);
        assert!(m.conserved());
    }

    #[test]
    fn recall_counts_accesses() {
        let mut m = MemorySystem::new(1, 2);
        let (a, _) = m.add(ItemKind::Turn, 1, "a");
        m.add(ItemKind::Turn, 1, "b");
        assert!(m.short_term.find(a).is_some());
        m.recall(a, 2).unwrap();
        assert_eq!(m.accesses(a), Some(1));
        assert!(m.eligible().is_empty());
        m.add(ItemKind::Turn, 2, "c");
        m.recall(a, 3).unwrap();
        m.add(ItemKind::Turn, 3, "d");
        assert_eq!(m.accesses(a), Some(2));
        assert_eq!(m.eligible().iter().map(|i| i.id).collect::<Vec<_>>(), vec![a]);
        m.mark_rehearsed(a).unwrap();
        assert!(m.conserved());
    }

    #[test]
    fn only_turns_are_eligible() {
        let mut m = MemorySystem::new(1, 1);
        let (t, _) = m.add(ItemKind::Thought, 1, "t");
        m.add(ItemKind::Turn, 1, "u");
        m.recall(t, 2).unwrap();
        m.add(ItemKind::Turn, 2, "v");
        assert!(m.eligible().iter().all(|i| i.kind == ItemKind::Turn));
    }

    #[test]
    fn expire_and_flush() {
        let mut m = MemorySystem::new(8, 2);
        m.add(ItemKind::RetrievedMemory, 1, "m");
        m.add(ItemKind::Thought, 1, "t");
        let moved = m.expire(1, |i| i.kind == ItemKind::RetrievedMemory);
        assert_eq!(moved.len(), 1);
        assert_eq!(m.working.len(), 1);
        m.flush_working(1);
        assert!(m.working.is_empty());
        assert_eq!(m.short_term.len(), 2);
        assert!(m.conserved());
    }
}
