"""Workbench for higher-order session processes: parse, typecheck, run,
compare, and translate session-typed processes."""

from .syntax import (Abs, App, Bra, In, Name, NameRef, New, Nil, Out, Par,
                     Param, Process, RVar, Rec, Sel, Value, Var, VarRef,
                     alpha_eq, classify, eq_mod, free_names, fresh_name,
                     ordered_free_names, sc_normalize, subst_name,
                     subst_value, vmap)
from .types import (END, ArrowT, SessT, SessionType, SharedT, TBra, TEnd,
                    TIn, TOut, TRec, TSel, TVarT, ValueType, balanced,
                    compute_dual, delta_reduce, dual_check, env_confluent,
                    env_join, env_split, type_equiv, unfold)
from .surface import (SourceFile, parse_env, parse_process, parse_type,
                      pretty, pretty_type)
from .typecheck import TypingError, TypingReport, check_process, check_value, typecheck_top
from .dynamics import (Configuration, LBra, LIn, LOut, LSel, LTau, barbs,
                       classify_tau, env_step, lts_untyped, make_config,
                       reduce_step, typed_transitions, weak_barbs,
                       weak_transitions)
from .equivalence import (BisimVerdict, bisim_check, char_process, char_value,
                          ftrigger, htrigger, input_candidates, test_process,
                          trigger_value)
from .encodings import (ENC_HOPI_TO_HO, ENC_HOPI_TO_PI, ENC_HOPIP_TO_HOPI,
                        ENC_POLY_TO_MONO, ENCODINGS, Encoding, aux_map,
                        check_correspondence, check_minimal_criteria,
                        check_type_preservation, compose, demo_negative,
                        enc_hopi_to_ho, enc_hopi_to_pi, enc_hopiplus_to_hopi,
                        enc_poly_to_mono, map_label)

__version__ = "0.1.0"
