class Architecture(object):
    """
    Tags of the supported model architectures.
    """
    SAINT = "SAINT"
    LTMTI = "LTMTI"
    UTMTI = "UTMTI"
    SSAKT = "SSAKT"

    ALL = (SAINT, LTMTI, UTMTI, SSAKT)


class EmbeddingDetail(object):
    """
    Detail levels for the response (and interaction) embeddings.

    Level ``A`` embeds the response value and position only. Level ``B`` adds
    the exercise category, timestamp and elapsed time.
    """
    A = "A"
    B = "B"

    ALL = (A, B)


class SublayerKind(object):
    """
    Kinds of pre-norm residual sublayers.
    """
    SELF_ATTN = "self_attn"
    CROSS_ATTN = "cross_attn"
    FFN = "ffn"

    ALL = (SELF_ATTN, CROSS_ATTN, FFN)


class MaskKind(object):
    """
    Attention mask kinds.
    """
    CAUSAL = "causal"
    NONE = "none"


class AttentionStream(object):
    """
    Names of the attention layers exported for inspection.
    """
    ENCODER_SELF = "encoder_self"
    DECODER_SELF = "decoder_self"
    CROSS = "cross"

    ALL = (ENCODER_SELF, DECODER_SELF, CROSS)


class EmbeddingLimits(object):
    """
    Fixed sizes of the attribute lookup tables.
    """
    #: Elapsed times are capped off at this many seconds.
    MAX_ELAPSED_SECONDS = 300

    #: Rows of the elapsed time table (0 through 300 inclusive).
    ELAPSED_BUCKETS = MAX_ELAPSED_SECONDS + 1

    #: Rows of the timestamp table, one per (month, day, hour) combination.
    TIMESTAMP_BUCKETS = 12 * 31 * 24


class CsvColumn(object):
    """
    Columns of the interaction log CSV format.
    """
    USER_ID = "user_id"
    TIMESTAMP = "timestamp"
    EXERCISE_ID = "exercise_id"
    CATEGORY_ID = "category_id"
    RESPONSE = "response"
    ELAPSED_SECONDS = "elapsed_seconds"

    ALL = (USER_ID, TIMESTAMP, EXERCISE_ID, CATEGORY_ID, RESPONSE,
           ELAPSED_SECONDS)


class SplitName(object):
    """
    Names of the per-user dataset splits.
    """
    TRAIN = "train"
    VALIDATION = "val"
    TEST = "test"

    ALL = (TRAIN, VALIDATION, TEST)


class ManifestProp(object):
    """
    Attributes of a serialized dataset manifest.
    """
    SCHEMA_VERSION = "schema_version"
    NUM_EXERCISES = "num_exercises"
    NUM_CATEGORIES = "num_categories"
    NUM_USERS = "num_users"
    NUM_RESPONSES = "num_responses"
    SPLITS = "splits"
    USERS = "users"
    RESPONSES = "responses"
    EXERCISE_IDS = "exercise_ids"
    CATEGORY_IDS = "category_ids"
    EXERCISE_CATEGORIES = "exercise_categories"
    CONTENT_HASH = "content_hash"


class MetricProp(object):
    """
    Attributes of training log lines and metric reports.
    """
    EPOCH = "epoch"
    STEP = "step"
    LR = "lr"
    TRAIN_LOSS = "train_loss"
    VAL_AUC = "val_auc"
    VAL_ACC = "val_acc"

    SPLIT = "split"
    AUC = "auc"
    ACC = "acc"
    N = "n"
    CHECKPOINT_HASH = "checkpoint_hash"


class CheckpointProp(object):
    """
    Attributes of the checkpoint metadata document.
    """
    FORMAT_VERSION = "format_version"
    ARCHITECTURE = "architecture"
    CONFIG = "config"
    MANIFEST = "manifest"
    MANIFEST_HASH = "manifest_hash"
    PARAMETERS = "parameters"


class ExitCode(object):
    """
    Process exit codes of the command line interface.
    """
    SUCCESS = 0
    VALIDATION = 2
    NUMERICAL = 3
    IO = 4
