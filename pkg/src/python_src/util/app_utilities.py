"""
This file is used to create shared resources for the application.

Methods
-------
load_config
    Load the configuration file.
config_section
    Return one section of the loaded configuration.

Shared Resources
----------------
app_config
    Parsed contents of app_config.yaml (numeric defaults, thresholds and file naming)
solve_defaults, certify_defaults, pf_core_defaults, system_defaults, file_defaults
    Shortcuts to the sections of app_config
"""

import os
from typing import Any, Dict, cast

from yaml import safe_load


def load_config(config_file: str) -> Dict[str, Any]:
    """
    Load configuration from a YAML file.

    Reads and parses a YAML configuration file into a Python dictionary.

    Args:
        config_file (str): Path to the YAML configuration file.

    Returns:
        Dict[str, Any]: Dictionary containing the parsed configuration data.

    Raises:
        FileNotFoundError: If the configuration file does not exist.
        yaml.YAMLError: If the YAML file is malformed or cannot be parsed.

    Example:
        >>> config = load_config("app_config.yaml")
        >>> print(config["solve"]["tol"])
        1e-10
    """
    with open(config_file, "r") as f:
        return cast(Dict[str, Any], safe_load(f))


def config_section(name: str) -> Dict[str, Any]:
    """Return a copy of one top-level section of app_config."""
    return dict(app_config[name])


app_config = load_config(os.path.join(os.path.dirname(__file__), "app_config.yaml"))

solve_defaults = config_section("solve")
certify_defaults = config_section("certify")
pf_core_defaults = config_section("pf_core")
system_defaults = config_section("system")
file_defaults = config_section("files")
