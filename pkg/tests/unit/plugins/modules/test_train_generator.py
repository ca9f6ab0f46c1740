#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type

from unittest.mock import MagicMock, patch

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import DimensionError
from ansible_collections.cloudkrafter.handwriting.plugins.modules.train_generator import main


MODULE = 'ansible_collections.cloudkrafter.handwriting.plugins.modules.train_generator'


def setup_ansible_module_mock(mock_module, params=None):
    """Helper to setup common AnsibleModule mock attributes"""
    mock_instance = MagicMock()
    mock_module.return_value = mock_instance
    mock_instance.params = dict(
        {'bias': 'letter_writer', 'epochs': None, 'config': None, 'seed': None, 'out': None},
        **(params or {})
    )
    mock_instance.check_mode = False
    mock_instance.exit_json = MagicMock()
    mock_instance.fail_json = MagicMock()
    return mock_instance


class TestTrainGeneratorModule:
    """Tests for train_generator module"""

    def test_main_function(self):
        """Test losses of cmd_train_generator are returned"""
        summary = {
            'bias': 'letter_writer',
            'epochs': 2,
            'train_loss': [5.1, 4.2],
            'validation_loss': [5.0, 4.4],
            'path': 'out/generator/letter_writer',
        }
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_generator') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'epochs': 2})
            mock_train.return_value = summary
            main()

        config, bias = mock_train.call_args[0]
        assert bias == 'letter_writer'
        assert config.section('generator')['epochs'] == 2
        result = module.exit_json.call_args[1]
        assert result['train_loss'] == [5.1, 4.2]
        assert result['changed'] is True

    def test_epochs_default_from_config(self):
        """Test epochs fall back to the configuration default"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_generator') as mock_train:
            setup_ansible_module_mock(mock_module)
            mock_train.return_value = {}
            main()

        assert mock_train.call_args[0][0].section('generator')['epochs'] == 30

    def test_negative_epochs(self):
        """Test a negative epoch count is rejected by the schema"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_generator') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'epochs': -1})
            main()

        mock_train.assert_not_called()
        assert 'generator/epochs' in module.fail_json.call_args[1]['msg']

    def test_check_mode(self):
        """Test check mode does not train"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_generator') as mock_train:
            module = setup_ansible_module_mock(mock_module)
            module.check_mode = True
            main()

        mock_train.assert_not_called()
        assert module.exit_json.call_args[1]['changed'] is True

    def test_dimension_error(self):
        """Test bias dimension mismatches report the dimension category"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_generator') as mock_train:
            module = setup_ansible_module_mock(mock_module)
            mock_train.side_effect = DimensionError("Bias vector has dimension 26, model expects 30")
            main()

        call_args = module.fail_json.call_args[1]
        assert call_args['error'] == {'type': 'dimension', 'details': 'DimensionError'}
        module.exit_json.assert_not_called()
