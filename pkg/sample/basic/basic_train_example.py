from __future__ import absolute_import
from __future__ import print_function
import json
import os
import sys

from saintkt import (SplitName, TrainConfig, evaluate, generate_synthetic,
                     train)

root_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.append(root_dir + "/../..")
sys.path.append(root_dir + "/..")

# Import common logging and configuration
from common import *

# Configure local logger
logging.getLogger().setLevel(logging.ERROR)
logger = logging.getLogger(__name__)

# Create the training configuration from file
config = TrainConfig.from_file(CONFIG_FILE)

# Extract the number of synthetic students, if specified, from a command
# line argument
NUM_USERS = 40
if len(sys.argv) > 1:
    NUM_USERS = int(sys.argv[1])

# Generate a synthetic dataset of students answering 20 exercises in
# 4 categories
dataset, _ = generate_synthetic(NUM_USERS, 20, 4, seed=config.seed,
                                min_length=10, max_length=40)
logger.info("Generated %d responses", dataset.manifest.num_responses)

# Train the model, keeping the parameters with the best validation AUC
result = train(config, dataset)

# Score the held out students with the selected parameters
test = evaluate(result.checkpoint, dataset, SplitName.TEST)

# Print out the per-epoch history and the test metrics
print("History:\n{}".format(json.dumps(result.history, indent=4)))
print("Test metrics:\n{}".format(json.dumps(test.to_dict(), indent=4,
                                            sort_keys=True)))
