import json
import yaml

DEBUG = False


def load_state(blob):
    return json.loads(blob)


def load_config(text):
    return yaml.safe_load(text)


key_of = lambda item: item.get("id")
