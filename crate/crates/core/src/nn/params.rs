use super::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    offset: usize,
    len: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Handle to one tensor of a [`ParamSet`]; valid for every set sharing the
/// same layout (parameters, gradients, optimizer moments).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named tensors stored in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    specs: Vec<ParamSpec>,
    data: Vec<T>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            specs: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Adds a zero-filled tensor. Panics on duplicate names, which would be a
    /// layout construction bug.
    pub fn register(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        let len = shape.iter().product();
        let spec = ParamSpec {
            name,
            shape: shape.to_vec(),
            offset: self.data.len(),
            len,
        };
        self.data.resize(self.data.len() + len, T::zero());
        self.specs.push(spec);
        ParamId(self.specs.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.specs.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.data[self.specs[id.0].range()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        let r = self.specs[id.0].range();
        &mut self.data[r]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            specs: self.specs.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn same_layout<U>(&self, other: &ParamSet<U>) -> bool {
        self.specs == other.specs
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            specs: self.specs.clone(),
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    /// Copies values from `other`, which must share the layout.
    pub fn copy_from(&mut self, other: &ParamSet<T>) {
        assert!(self.same_layout(other), "parameter layouts differ");
        self.data.copy_from_slice(&other.data);
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_access() {
        let mut p = ParamSet::<f32>::new();
        let a = p.register("a", &[2, 3]);
        let b = p.register("b", &[4]);
        p.get_mut(b)[3] = 5.0;
        assert_eq!(p.len(), 10);
        assert_eq!(p.get(a).len(), 6);
        assert_eq!(p.data()[9], 5.0);
        assert_eq!(p.find("b"), Some(b));
        let g = p.zeros_like();
        assert!(g.same_layout(&p));
        assert_eq!(g.get(b), &[0.0; 4]);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut p = ParamSet::<f32>::new();
        p.register("a", &[1]);
        p.register("a", &[1]);
    }
}
