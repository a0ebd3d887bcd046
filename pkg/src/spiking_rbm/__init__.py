"""Spiking neural sampling of RBMs with event-driven contrastive divergence."""

from .calibration import (SigmoidFit, TransferCurve, calibrate, fit_sigmoid,
                          inverse_transfer, map_rbm_to_network,
                          measure_transfer_curve, network_matched_fit,
                          predict_transfer_curve)
from .config import ExperimentConfig
from .estimators import CDDigitClassifier, SpikingCDClassifier
from .evaluation import (ClassReadout, QuantizationSpec, classify_by_free_energy,
                         classify_by_rate, cue_integration, free_energy,
                         generate_digit, quantize_params)
from .learning import (EcdOptions, EventDrivenTrainer, ModulationSchedule,
                       StdpConfig, TrainerState, average_update_estimate,
                       modulation_g, stdp_magnitude_for_eta, stdp_on_spike,
                       train_cd_reference)
from .mnist import (DigitDataset, binarize, clamp_currents, encode_label,
                    load_idx, surrogate_digits, write_idx)
from .neurons import (NeuronConfig, NeuronState, PoissonSource, SpikeRecord,
                      SynapseBank, integrate_synapse, poisson_spikes,
                      step_neuron)
from .network import CurrentSchedule, Layer, Network, WatchdogConfig, run_network
from .rbm import RbmParams, random_rbm
from .sampling import (BinaryTrace, BoltzmannParams, StateHistogram,
                       abstract_neural_sample, exact_boltzmann,
                       gibbs_sample_rbm, histogram_states, kl_divergence,
                       kl_vs_time, random_boltzmann, spikes_to_binary_trace)

__version__ = "0.1.0"
