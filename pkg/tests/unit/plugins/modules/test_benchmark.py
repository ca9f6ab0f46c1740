#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type

from unittest.mock import MagicMock, patch

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import ConfigError
from ansible_collections.cloudkrafter.handwriting.plugins.modules.benchmark import main


MODULE = 'ansible_collections.cloudkrafter.handwriting.plugins.modules.benchmark'

ALL_BIASES = ['letter', 'letter_writer', 'classifier', 'autoencoder']


def setup_ansible_module_mock(mock_module, params=None):
    """Helper to setup common AnsibleModule mock attributes"""
    mock_instance = MagicMock()
    mock_module.return_value = mock_instance
    mock_instance.params = dict(
        {'biases': list(ALL_BIASES), 'skip_synth': False, 'temperature': None, 'epochs': None,
         'format': None, 'published': None, 'config': None, 'seed': None, 'out': None},
        **(params or {})
    )
    mock_instance.check_mode = False
    mock_instance.exit_json = MagicMock()
    mock_instance.fail_json = MagicMock()
    return mock_instance


class TestBenchmarkModule:
    """Tests for benchmark module"""

    def test_main_function(self):
        """Test every option reaches run_benchmark"""
        summary = {'stages': {}, 'report': 'out/reports/benchmark/report.csv', 'results': []}
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.run_benchmark') as mock_run:
            module = setup_ansible_module_mock(mock_module, {
                'biases': ['letter', 'autoencoder'], 'skip_synth': True, 'temperature': 0.5, 'epochs': 4,
                'format': 'csv', 'published': True, 'seed': 9,
            })
            mock_run.return_value = ([], summary)
            main()

        config, biases = mock_run.call_args[0]
        assert biases == ['letter', 'autoencoder']
        assert mock_run.call_args[1] == {'skip_synth': True}
        assert config.seed == 9
        assert config.section('generator')['temperature'] == 0.5
        assert config.section('generator')['epochs'] == 4
        assert config.section('eval')['format'] == 'csv'
        result = module.exit_json.call_args[1]
        assert result['report'] == summary['report']
        assert result['biases'] == ['letter', 'autoencoder']
        assert result['changed'] is True

    def test_default_biases(self):
        """Test the four trained bias kinds run by default"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.run_benchmark') as mock_run:
            setup_ansible_module_mock(mock_module)
            mock_run.return_value = ([], {})
            main()

        assert mock_run.call_args[0][1] == ALL_BIASES
        spec = mock_module.call_args[1]['argument_spec']
        assert spec['biases']['default'] == ALL_BIASES

    def test_check_mode(self):
        """Test check mode runs nothing"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.run_benchmark') as mock_run:
            module = setup_ansible_module_mock(mock_module)
            module.check_mode = True
            main()

        mock_run.assert_not_called()
        assert module.exit_json.call_args[1]['msg'] == "Benchmark would run (check mode)"

    def test_config_error(self):
        """Test stage failures are reported with their category"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.run_benchmark') as mock_run:
            module = setup_ansible_module_mock(mock_module, {'biases': ['external']})
            mock_run.side_effect = ConfigError("styles.external_table must name a table file for the external bias")
            main()

        call_args = module.fail_json.call_args[1]
        assert call_args['error'] == {'type': 'config', 'details': 'ConfigError'}
        assert call_args['changed'] is False

    def test_unexpected_error(self):
        """Test unexpected exceptions are reported with a traceback"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.run_benchmark') as mock_run:
            module = setup_ansible_module_mock(mock_module)
            mock_run.side_effect = RuntimeError("worker died")
            main()

        call_args = module.fail_json.call_args[1]
        assert call_args["msg"] == "Unexpected error: worker died"
        assert 'exception' in call_args
