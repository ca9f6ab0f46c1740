#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: synth
short_description: Write the letter corpus of a benchmark run
description:
  - Synthesizes a multi-writer corpus of uppercase letter tracings from the C(corpus) section of the run configuration.
  - Each writer gets a deterministic slant, scale, speed, stroke order and jitter, so the corpus depends on the seed only.
  - When O(source) (or C(corpus.source)) names a JSONL file, that file is imported instead of synthesizing.
  - Writes C(corpus/corpus.jsonl), C(corpus/manifest.yml) and C(corpus/provenance.yml) below O(out).
version_added: "1.0.0"
options:
  config:
    description:
      - Run configuration YAML file. Values not set there fall back to the built-in defaults.
    required: false
    type: path
  seed:
    description:
      - Global seed. Overrides C(seed) from the configuration.
    required: false
    type: int
  out:
    description:
      - Output directory of the run. Overrides C(out) from the configuration.
    required: false
    type: path
  source:
    description:
      - JSONL file with one C({"writer_id", "letter", "points"}) record per line to import instead of synthesizing.
      - Invalid records are skipped and reported.
    required: false
    type: path
author:
  - "Brian Veltman (@cloudkrafter)"
'''

EXAMPLES = '''
- name: Synthesize the desk-scale corpus
  cloudkrafter.handwriting.synth:
    out: /srv/handwriting/run1
    seed: 7

- name: Import a converted online handwriting corpus
  cloudkrafter.handwriting.synth:
    config: /srv/handwriting/run.yml
    source: /srv/data/letters.jsonl
'''

RETURN = '''
samples:
  description: Number of samples in the written corpus
  returned: success
  type: int
  sample: 1000
writers:
  description: Number of distinct writers
  returned: success
  type: int
  sample: 20
path:
  description: Corpus directory
  returned: success
  type: str
  sample: /srv/handwriting/run1/corpus
error:
  description: Error category and exception type when the module fails
  returned: failure
  type: dict
  sample: {"type": "config", "details": "ConfigError"}
'''

import traceback

from ansible.module_utils.basic import AnsibleModule, missing_required_lib

try:
    from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
        HandwritingError,
        error_details,
        module_logging,
    )
    from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.pipeline import (
        RunConfig,
        build_overrides,
        cmd_synth,
    )
    HAS_DEPS = True
    DEPS_IMPORT_ERROR = None
except ImportError:
    HAS_DEPS = False
    DEPS_IMPORT_ERROR = traceback.format_exc()


def main():
    """Main entry point."""
    module_args = dict(
        config=dict(type='path', required=False),
        seed=dict(type='int', required=False),
        out=dict(type='path', required=False),
        source=dict(type='path', required=False),
    )

    module = AnsibleModule(
        argument_spec=module_args,
        supports_check_mode=True
    )

    if not HAS_DEPS:
        module.fail_json(msg=missing_required_lib('numpy, scipy, PyYAML, jsonschema and Jinja2'),
                         exception=DEPS_IMPORT_ERROR)

    result = dict(changed=False)

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(seed=module.params['seed'], out=module.params['out'], source=module.params['source'])
            )
            if module.check_mode:
                result.update(changed=True, msg="Corpus would be written (check mode)")
                return module.exit_json(**result)
            result.update(cmd_synth(config))
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
