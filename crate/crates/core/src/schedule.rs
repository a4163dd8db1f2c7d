//! The schedule data model: per-round link actions and local computations.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::op::CombineOp;
use crate::topology::{LinkId, NodeId, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemKind {
    Data,
    /// One-bit signal such as an acknowledgement or a start message.
    Control,
}

/// A logical payload. Items are single-assignment: every bit has one value no
/// matter which node holds or computes it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDecl {
    pub name: String,
    pub len: u64,
    pub kind: ItemKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Item(ItemId),
    /// The operator's unit, known to every node.
    Unit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Send {
        link: LinkId,
        from: NodeId,
        to: NodeId,
        item: ItemId,
        range: Range<u64>,
    },
    /// Stores bits `range` of `item` at the same offsets of `file`.
    Write {
        node: NodeId,
        file: FileId,
        item: ItemId,
        range: Range<u64>,
    },
    /// Fetches bits `range` of whatever item `file` holds.
    Read {
        node: NodeId,
        file: FileId,
        range: Range<u64>,
    },
}

/// Free local computation, executed at the start of its round before any
/// transfer of that round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compute {
    /// `out[range] = left[range] (x) right[range]` with the schedule's operator.
    Combine {
        node: NodeId,
        out: ItemId,
        left: Operand,
        right: Operand,
        range: Range<u64>,
    },
    /// Lane-wise `out = input - own + prev (mod modulus)`.
    Mask {
        node: NodeId,
        out: ItemId,
        input: ItemId,
        own: ItemId,
        prev: ItemId,
        lane_bits: u32,
        modulus: u64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub computes: Vec<Compute>,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub items: Vec<ItemDecl>,
    pub files: Vec<String>,
    /// `rounds[t - 1]` holds round `t`.
    pub rounds: Vec<RoundPlan>,
    pub op: Option<CombineOp>,
}

impl Schedule {
    pub fn new(op: Option<CombineOp>) -> Self {
        Schedule {
            op,
            ..Schedule::default()
        }
    }

    pub fn item(&mut self, name: impl Into<String>, len: u64, kind: ItemKind) -> ItemId {
        self.items.push(ItemDecl {
            name: name.into(),
            len,
            kind,
        });
        ItemId(self.items.len() as u32 - 1)
    }

    pub fn file(&mut self, name: &str) -> FileId {
        if let Some(k) = self.files.iter().position(|f| f == name) {
            return FileId(k as u32);
        }
        self.files.push(name.to_string());
        FileId(self.files.len() as u32 - 1)
    }

    pub fn file_id(&self, name: &str) -> Option<FileId> {
        self.files
            .iter()
            .position(|f| f == name)
            .map(|k| FileId(k as u32))
    }

    pub fn decl(&self, item: ItemId) -> &ItemDecl {
        &self.items[item.0 as usize]
    }

    pub fn round_mut(&mut self, t: Round) -> &mut RoundPlan {
        assert!(t >= 1, "rounds are numbered from 1");
        let k = t as usize;
        if self.rounds.len() < k {
            self.rounds.resize_with(k, RoundPlan::default);
        }
        &mut self.rounds[k - 1]
    }

    pub fn push_action(&mut self, t: Round, a: Action) {
        self.round_mut(t).actions.push(a);
    }

    pub fn push_compute(&mut self, t: Round, c: Compute) {
        self.round_mut(t).computes.push(c);
    }

    /// Last round with a transfer (0 when there is none).
    pub fn horizon(&self) -> Round {
        self.rounds
            .iter()
            .rposition(|r| !r.actions.is_empty())
            .map_or(0, |k| k as Round + 1)
    }

    pub fn action_count(&self) -> usize {
        self.rounds.iter().map(|r| r.actions.len()).sum()
    }
}

/// Memory and cloud contents before round 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitialState {
    /// Items held in full by a node at the start.
    pub holdings: Vec<(NodeId, ItemId)>,
    /// Files present in full in the cloud at the start.
    pub files: Vec<(FileId, ItemId)>,
    /// Literal values; items without one are tracked symbolically.
    pub values: Vec<(ItemId, Bits)>,
    /// Items that must never cross a local link.
    pub private: Vec<ItemId>,
}

/// Runs `second` right after the last transfer of `first`. Each pair in
/// `bind` names an item of `second` whose initial holding is instead
/// produced by `first` as the given item; the rest of `second`'s initial
/// state is kept, its items are renumbered and its files merged by name.
/// Computes of `first` in a shared round run before those of `second`.
pub fn sequence(
    first: (Schedule, InitialState),
    second: (Schedule, InitialState),
    bind: &[(ItemId, ItemId)],
) -> (Schedule, InitialState) {
    let (mut s, mut init) = first;
    let (other, oinit) = second;
    let shift = s.horizon();
    let mut map = Vec::with_capacity(other.items.len());
    for (k, decl) in other.items.iter().enumerate() {
        let id = ItemId(k as u32);
        map.push(match bind.iter().find(|b| b.0 == id) {
            Some(b) => b.1,
            None => s.item(decl.name.clone(), decl.len, decl.kind),
        });
    }
    let item = |x: ItemId| map[x.0 as usize];
    let files: Vec<FileId> = other.files.iter().map(|f| s.file(f)).collect();
    let file = |f: FileId| files[f.0 as usize];
    let operand = |o: Operand| match o {
        Operand::Item(x) => Operand::Item(item(x)),
        Operand::Unit => Operand::Unit,
    };
    for (k, plan) in other.rounds.into_iter().enumerate() {
        let t = shift + k as Round + 1;
        for c in plan.computes {
            let c = match c {
                Compute::Combine { node, out, left, right, range } => Compute::Combine {
                    node,
                    out: item(out),
                    left: operand(left),
                    right: operand(right),
                    range,
                },
                Compute::Mask { node, out, input, own, prev, lane_bits, modulus } => Compute::Mask {
                    node,
                    out: item(out),
                    input: item(input),
                    own: item(own),
                    prev: item(prev),
                    lane_bits,
                    modulus,
                },
            };
            s.push_compute(t, c);
        }
        for a in plan.actions {
            let a = match a {
                Action::Send { link, from, to, item: x, range } => Action::Send { link, from, to, item: item(x), range },
                Action::Write { node, file: f, item: x, range } => Action::Write { node, file: file(f), item: item(x), range },
                Action::Read { node, file: f, range } => Action::Read { node, file: file(f), range },
            };
            s.push_action(t, a);
        }
    }
    let bound = |x: &ItemId| bind.iter().any(|b| b.0 == *x);
    init.holdings.extend(oinit.holdings.iter().filter(|h| !bound(&h.1)).map(|&(v, x)| (v, item(x))));
    init.files.extend(oinit.files.iter().map(|&(f, x)| (file(f), item(x))));
    init.values.extend(oinit.values.into_iter().filter(|v| !bound(&v.0)).map(|(x, b)| (item(x), b)));
    init.private.extend(oinit.private.iter().filter(|x| !bound(x)).map(|&x| item(x)));
    (s, init)
}
