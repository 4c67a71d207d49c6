/// Integer-indexed array that grows in both directions. Reads outside the
/// allocated span return `T::default()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape<T> {
    offset: i64,
    data: Vec<T>,
}

impl<T: Copy + Default> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Copy + Default> Tape<T> {
    pub fn new() -> Self {
        Tape {
            offset: -8,
            data: vec![T::default(); 16],
        }
    }

    #[inline]
    pub fn get(&self, i: i64) -> T {
        let k = i - self.offset;
        if k >= 0 && (k as usize) < self.data.len() {
            self.data[k as usize]
        } else {
            T::default()
        }
    }

    #[inline]
    pub fn get_mut(&mut self, i: i64) -> &mut T {
        let mut k = i - self.offset;
        if k < 0 || k as usize >= self.data.len() {
            self.grow_to(i);
            k = i - self.offset;
        }
        &mut self.data[k as usize]
    }

    fn grow_to(&mut self, i: i64) {
        let len = self.data.len() as i64;
        let lo = self.offset.min(i);
        let hi = (self.offset + len).max(i + 1);
        let pad = (hi - lo).max(16);
        let new_lo = lo - pad / 2;
        let new_hi = hi + pad / 2;
        let mut data = vec![T::default(); (new_hi - new_lo) as usize];
        let start = (self.offset - new_lo) as usize;
        data[start..start + self.data.len()].copy_from_slice(&self.data);
        self.offset = new_lo;
        self.data = data;
    }

    /// `(index, value)` pairs over the allocated span.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.data
            .iter()
            .enumerate()
            .map(move |(k, v)| (k as i64 + self.offset, *v))
    }
}
