use rand::Rng;
use vidsteg_nn::layers::{visit_prefixed, visit_prefixed_mut};
use vidsteg_nn::tensor::{concat_channels, split_channels};
use vidsteg_nn::{
    BatchNorm2d, Conv2d, ConvTranspose2d, Layer, LeakyRelu, Mode, Param, Real, Relu, Sequential, Sigmoid, Tensor,
};

pub const ENCODER_STAGES: usize = 7;
pub const LEAKY_SLOPE: f64 = 0.2;

/// Encoder widths as multiples of the base width.
const ENC_MULT: [usize; ENCODER_STAGES] = [1, 2, 4, 8, 8, 8, 8];

/// U-net hiding network: 7 strided conv stages down to `H/128 x W/128`, then
/// 7 transposed-conv stages back up. Decoder stage `j >= 1` concatenates its
/// predecessor's output with encoder output `6 - j`.
pub struct HNet<T> {
    pub base: usize,
    encoders: Vec<Sequential<T>>,
    decoders: Vec<Sequential<T>>,
}

/// Intermediate activations of one evaluation-mode pass.
pub struct HNetTrace<T> {
    pub encoder_outputs: Vec<Tensor<T>>,
    /// Input to every decoder stage (after concatenation).
    pub decoder_inputs: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

impl<T: Real> HNet<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, base: usize) -> Self {
        let enc_out: Vec<usize> = ENC_MULT.iter().map(|m| m * base).collect();
        let mut encoders = Vec::with_capacity(ENCODER_STAGES);
        let mut c_in = 6;
        for &c_out in &enc_out {
            encoders.push(
                Sequential::new()
                    .push(Conv2d::new(rng, c_in, c_out, 4, 2, 1))
                    .push(BatchNorm2d::new(c_out))
                    .push(LeakyRelu::new(LEAKY_SLOPE)),
            );
            c_in = c_out;
        }
        let mut decoders = Vec::with_capacity(ENCODER_STAGES);
        for j in 0..ENCODER_STAGES {
            let c_in = Self::decoder_in_channels(base, j);
            if j + 1 == ENCODER_STAGES {
                decoders.push(Sequential::new().push(ConvTranspose2d::new(rng, c_in, 3, 4, 2, 1)).push(Sigmoid::new()));
            } else {
                let c_out = enc_out[ENCODER_STAGES - 2 - j];
                decoders.push(
                    Sequential::new()
                        .push(ConvTranspose2d::new(rng, c_in, c_out, 4, 2, 1))
                        .push(BatchNorm2d::new(c_out))
                        .push(Relu::new()),
                );
            }
        }
        Self { base, encoders, decoders }
    }

    fn decoder_in_channels(base: usize, j: usize) -> usize {
        if j == 0 {
            ENC_MULT[ENCODER_STAGES - 1] * base
        } else {
            2 * ENC_MULT[ENCODER_STAGES - 1 - j] * base
        }
    }

    /// Encoder stage whose output decoder stage `j` concatenates, if any.
    pub fn skip_source(j: usize) -> Option<usize> {
        (1..ENCODER_STAGES).contains(&j).then(|| ENCODER_STAGES - 1 - j)
    }

    /// Output channels of the previous decoder stage, i.e. where the skip
    /// half starts inside decoder `j`'s input.
    fn main_channels(&self, j: usize) -> usize {
        Self::decoder_in_channels(self.base, j) / 2
    }

    /// Evaluation-mode pass that records every stage. `ablate_skip = Some(k)`
    /// replaces encoder output `k` by zeros where it is concatenated into the
    /// decoder (the encoder chain itself is untouched).
    pub fn infer_traced(&self, x: &Tensor<T>, ablate_skip: Option<usize>) -> HNetTrace<T> {
        let mut enc = Vec::with_capacity(ENCODER_STAGES);
        let mut h = x.clone();
        for e in &self.encoders {
            h = e.infer(&h);
            enc.push(h.clone());
        }
        let mut dec_in = Vec::with_capacity(ENCODER_STAGES);
        let mut d = enc[ENCODER_STAGES - 1].clone();
        for (j, dec) in self.decoders.iter().enumerate() {
            let input = match Self::skip_source(j) {
                None => d,
                Some(k) if Some(k) == ablate_skip => concat_channels(&d, &Tensor::zeros(enc[k].raw_dim())),
                Some(k) => concat_channels(&d, &enc[k]),
            };
            d = dec.infer(&input);
            dec_in.push(input);
        }
        HNetTrace { encoder_outputs: enc, decoder_inputs: dec_in, output: d }
    }
}

impl<T: Real> Layer<T> for HNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut enc = Vec::with_capacity(ENCODER_STAGES);
        let mut h = x.clone();
        for e in &mut self.encoders {
            h = e.forward(&h, mode);
            enc.push(h.clone());
        }
        let mut d = enc.pop().unwrap();
        for (j, dec) in self.decoders.iter_mut().enumerate() {
            if let Some(k) = Self::skip_source(j) {
                d = concat_channels(&d, &enc[k]);
            }
            d = dec.forward(&d, mode);
        }
        d
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..ENCODER_STAGES).map(|_| None).collect();
        let mut g = grad.clone();
        for j in (0..ENCODER_STAGES).rev() {
            let gin = self.decoders[j].backward(&g);
            match Self::skip_source(j) {
                Some(k) => {
                    let (main, skip) = split_channels(&gin, self.main_channels(j));
                    skip_grads[k] = Some(skip);
                    g = main;
                }
                None => g = gin,
            }
        }
        for k in (0..ENCODER_STAGES).rev() {
            if let Some(s) = skip_grads[k].take() {
                g += &s;
            }
            g = self.encoders[k].backward(&g);
        }
        g
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        self.infer_traced(x, None).output
    }

    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, e) in self.encoders.iter().enumerate() {
            visit_prefixed(&format!("enc.{i}"), e, f);
        }
        for (i, d) in self.decoders.iter().enumerate() {
            visit_prefixed(&format!("dec.{i}"), d, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, e) in self.encoders.iter_mut().enumerate() {
            visit_prefixed_mut(&format!("enc.{i}"), e, f);
        }
        for (i, d) in self.decoders.iter_mut().enumerate() {
            visit_prefixed_mut(&format!("dec.{i}"), d, f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skip_wiring_table() {
        let got: Vec<_> = (0..ENCODER_STAGES).map(HNet::<f32>::skip_source).collect();
        assert_eq!(got, [None, Some(5), Some(4), Some(3), Some(2), Some(1), Some(0)]);
    }

    #[test]
    fn micro_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = HNet::<f32>::new(&mut rng, 2);
        let x = Array4::from_elem((1, 6, 128, 128), 0.3f32);
        let t = net.infer_traced(&x, None);
        assert_eq!(t.encoder_outputs[6].dim(), (1, 16, 1, 1));
        assert_eq!(t.output.dim(), (1, 3, 128, 128));
        let in_ch: Vec<_> = t.decoder_inputs.iter().map(|d| d.dim().1).collect();
        assert_eq!(in_ch, [16, 32, 32, 32, 16, 8, 4]);
    }
}
