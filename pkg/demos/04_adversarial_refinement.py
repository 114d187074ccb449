"""Adversarial refinement of the sparse-coding generator.

The dictionaries stay frozen. The generator is unrolled LISTA-T with
learnable thresholds plus a learned output map, started at the identity so
that it reproduces truncated ISTA-T. A small discriminator learns to tell
real fine patches from generated ones; as the generator fits the content
loss its held-out accuracy drifts back toward chance.
"""
from tubalsr.adversarial import TganConfig, train_tgan
from tubalsr.sparse import IstaConfig
from tubalsr.superres import block_mask, downsample, pair_samples, psnr, super_resolve, train_sr_pair
from tubalsr.synth import PathLossParams, gen_radiomap, random_aps

seed = 1
region = (16.0, 32.0)
fine = gen_radiomap(region, 0.5, PathLossParams(ap_positions=random_aps(region, 10, seed), seed=seed))
mask = block_mask(fine.shape[:2], 8, 0.7, seed)
pair = train_sr_pair(fine, 2, mask, r=32, lam=1e-3, iters=10, seed=seed, center=True,
                     ista=IstaConfig(lam=1e-3, max_iters=200, rel_tol=1e-10))

f_s, c_s = pair_samples(fine, pair, mask)
res = train_tgan(f_s, c_s, pair, TganConfig(seed=seed), lam=1e-3)
for h in res.history[::5] + res.history[-1:]:
    print(f"epoch {h['epoch']:2d}  content {h['content_loss']:.4f}  adv {h['adv_loss']:.3f}  "
          f"disc accuracy {h['disc_accuracy']:.3f}")

coarse = downsample(fine, 2)
plain = super_resolve(coarse, pair, IstaConfig(lam=1e-3, max_iters=1000, rel_tol=1e-10))
refined = super_resolve(coarse, pair, generator=res.refiner)
print(f"held-out PSNR: full ISTA-T {psnr(fine, plain, ~mask):.2f} dB, "
      f"{len(res.refiner.thresholds)}-step refined generator {psnr(fine, refined, ~mask):.2f} dB")
