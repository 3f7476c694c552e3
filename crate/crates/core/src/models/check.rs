use super::network::{ArchKind, Network};
use crate::nn::gradcheck::{owner, perturbed_outputs, probes_from, propagate, row_losses};
use crate::nn::{forward_all, weighted_cross_entropy, Act, GradCheckTarget, Layer, ParamId, ParamStore, Probe};
use crate::patching::{ClassWeights, Label};
use crate::{Error, Result, PATCH_SIZE};

/// Loss of one labelled patch pair under a 64-bit network, as a target for
/// [`grad_check`](crate::nn::grad_check).
///
/// For the Siamese network a trunk perturbation is applied to both branches
/// at once, since both read the same storage.
#[derive(Debug, Clone)]
pub struct PairLoss<'a> {
    net: &'a Network<f64>,
    earlier: Act<f64>,
    later: Act<f64>,
    label: Label,
    weights: ClassWeights,
    fused: Vec<Layer>,
}

struct Base {
    a: Vec<Act<f64>>,
    b: Option<Vec<Act<f64>>>,
    head: Vec<Act<f64>>,
}

impl<'a> PairLoss<'a> {
    pub fn new(net: &'a Network<f64>, earlier: Vec<f64>, later: Vec<f64>, label: Label, weights: ClassWeights) -> Result<Self> {
        let c = net.arch().channels;
        let earlier = Act::new(1, PATCH_SIZE, PATCH_SIZE, c, earlier)?;
        let later = Act::new(1, PATCH_SIZE, PATCH_SIZE, c, later)?;
        let fused = net.trunk().iter().chain(net.head()).cloned().collect();
        Ok(PairLoss {
            net,
            earlier,
            later,
            label,
            weights,
            fused,
        })
    }

    fn base(&self) -> Result<Base> {
        let params = self.net.params();
        Ok(match self.net.arch().kind {
            ArchKind::EarlyFusion => {
                let x = Network::concat_channels(&self.earlier, &self.later);
                Base {
                    a: forward_all(&self.fused, params, x)?,
                    b: None,
                    head: Vec::new(),
                }
            }
            ArchKind::Siamese => {
                let a = forward_all(self.net.trunk(), params, self.earlier.clone())?;
                let b = forward_all(self.net.trunk(), params, self.later.clone())?;
                let features = Network::concat_channels(a.last().expect("trunk"), b.last().expect("trunk"));
                let head = forward_all(self.net.head(), params, features)?;
                Base { a, b: Some(b), head }
            }
        })
    }
}

impl GradCheckTarget for PairLoss<'_> {
    fn params(&self) -> &ParamStore<f64> {
        self.net.params()
    }

    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)> {
        let pass = self.net.forward(&self.earlier.data, &self.later.data, 1)?;
        let (loss, g) = weighted_cross_entropy(&pass.probs, self.label, &self.weights);
        let mut grads = self.net.params().zeros_like();
        self.net.backward(&pass, &g, &mut grads)?;
        Ok((loss, grads))
    }

    fn probe(&self, id: ParamId, indices: &[usize], h: f64) -> Result<Vec<Probe>> {
        let params = self.net.params();
        let base = self.base()?;
        let unknown = || Error::invalid("parameter is not used by the network");
        let Some(base_b) = &base.b else {
            let l = owner(&self.fused, id).ok_or_else(unknown)?;
            let batch = perturbed_outputs(&self.fused[l], id, indices, h, &base.a[l], &base.a[l + 1])?;
            let mut crossed = vec![false; batch.n];
            let out = propagate(&self.fused[l + 1..], params, batch, &base.a[l + 1..], &mut crossed)?;
            return Ok(probes_from(&row_losses(&out, self.label, &self.weights), &crossed));
        };
        let (trunk, head) = (self.net.trunk(), self.net.head());
        let n = 2 * indices.len();
        let mut crossed = vec![false; n];
        let (features, first_head) = if let Some(l) = owner(trunk, id) {
            let mut outs = Vec::with_capacity(2);
            for acts in [&base.a, base_b] {
                let batch = perturbed_outputs(&trunk[l], id, indices, h, &acts[l], &acts[l + 1])?;
                outs.push(propagate(&trunk[l + 1..], params, batch, &acts[l + 1..], &mut crossed)?);
            }
            (Network::concat_channels(&outs[0], &outs[1]), 0)
        } else {
            let l = owner(head, id).ok_or_else(unknown)?;
            (perturbed_outputs(&head[l], id, indices, h, &base.head[l], &base.head[l + 1])?, l + 1)
        };
        let out = propagate(&head[first_head..], params, features, &base.head[first_head..], &mut crossed)?;
        Ok(probes_from(&row_losses(&out, self.label, &self.weights), &crossed))
    }
}

/// Trunk outputs of the two Siamese branches.
pub fn branch_features(net: &Network<f64>, earlier: &[f64], later: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if net.arch().kind != ArchKind::Siamese {
        return Err(Error::invalid("branch features exist only for the Siamese network"));
    }
    Ok((net.trunk_features(earlier, 1)?, net.trunk_features(later, 1)?))
}
