use super::Symbol;

/// Generators of the stack-operation semiring.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StackOp {
    Pop(Symbol),
    Push(Symbol),
    One,
    Zero,
}

/// A reduced monomial: pops followed by pushes, or zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct StackWord {
    pub pops: Vec<Symbol>,
    pub pushes: Vec<Symbol>,
    pub zero: bool,
}

impl StackWord {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn zero() -> Self {
        StackWord {
            zero: true,
            ..Self::default()
        }
    }

    pub fn is_one(&self) -> bool {
        !self.zero && self.pops.is_empty() && self.pushes.is_empty()
    }

    /// Appends one operation, cancelling a push against a following pop.
    pub fn then(mut self, op: &StackOp) -> Self {
        if self.zero {
            return self;
        }
        match op {
            StackOp::One => {}
            StackOp::Zero => return Self::zero(),
            StackOp::Push(s) => self.pushes.push(s.clone()),
            StackOp::Pop(s) => match self.pushes.pop() {
                Some(top) if &top == s => {}
                Some(_) => return Self::zero(),
                None => self.pops.push(s.clone()),
            },
        }
        self
    }

    pub fn of(ops: &[StackOp]) -> Self {
        ops.iter().fold(Self::one(), |w, op| w.then(op))
    }
}
