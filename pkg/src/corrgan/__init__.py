"""Conditional generation of correlated binary data.

A correlational autoencoder maps discrete records into a continuous latent
space; an adversarially trained generator, conditioned by concatenating a
one-hot label to its noise input, produces latents that the autoencoder's
decoder turns back into binary records.
"""

from .corrnn import (
    BinaryRecord,
    CorrNnParams,
    corrnn_loss_grads,
    decode,
    encode,
    hidden_correlation,
    init_corrnn,
    pretrain,
    reconstruct,
)
from .dataio import (
    CheckpointBundle,
    EncodedDataset,
    ProfileRecord,
    SynthSpec,
    TokenDictionary,
    binarize_images,
    build_dictionaries,
    load_checkpoint,
    load_mnist,
    load_profiles,
    preprocess_profiles,
    save_checkpoint,
    synth_correlated_dataset,
    vectorize_profiles,
)
from .gan import (
    GenerationResult,
    TrainCfg,
    TrainResult,
    conditional_generate,
    discriminate,
    discriminator_step,
    generator_step,
    inpaint_halves,
    sample_noise,
    synthesize_batch,
    train_corrgan,
)
from .metrics import (
    CooccurrenceMatrix,
    EvalReport,
    classifier_diversity,
    cooccurrence_error,
    cooccurrence_matrix,
    export_report,
    occurrence_mse,
    occurrence_probabilities,
)
from .nn import (
    AdamState,
    DivergenceError,
    Mlp,
    adam_step,
    finite_diff_grad,
    init_mlp,
    make_rng,
    mlp_backward,
    mlp_forward,
)

__version__ = "0.1.0"
