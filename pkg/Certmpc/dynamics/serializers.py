import math

from django.conf import settings
from rest_framework import serializers

from .tasks import WheelGeometry, dubins_task


def vector_field(length):
    return serializers.ListField(
        child=serializers.FloatField(),
        min_length=length,
        max_length=length,
        required=False,
    )


class ObstacleSerializer(serializers.Serializer):
    """Serializer for a disc obstacle"""
    center = vector_field(2)
    radius = serializers.FloatField()

    def validate_radius(self, value):
        """Validate that the radius is positive"""
        if value <= 0:
            raise serializers.ValidationError('Radius must be positive.')
        return value

    def validate(self, attrs):
        if 'center' not in attrs:
            raise serializers.ValidationError({'center': 'This field is required.'})
        return attrs


class TaskSerializer(serializers.Serializer):
    """
    Serializer for the ``task`` section of a run config.

    Missing keys fall back to the CERTMPC settings defaults.
    """
    time_step = serializers.FloatField(required=False)
    cost_weight = serializers.FloatField(required=False)
    goal = vector_field(3)
    start = vector_field(3)
    obstacles = ObstacleSerializer(many=True, required=False)
    input_lower = vector_field(2)
    input_upper = vector_field(2)
    domain_lower = vector_field(3)
    domain_upper = vector_field(3)
    discount = serializers.FloatField(required=False)
    horizon = serializers.IntegerField(required=False)
    level = serializers.FloatField(required=False)
    max_steps = serializers.IntegerField(required=False)
    goal_tolerance = serializers.FloatField(required=False)
    wheel_radius = serializers.FloatField(required=False)
    wheel_base = serializers.FloatField(required=False)
    swap_wheels = serializers.BooleanField(required=False)

    def validate_time_step(self, value):
        if value <= 0:
            raise serializers.ValidationError('Time step must be positive.')
        return value

    def validate_cost_weight(self, value):
        if value <= 0:
            raise serializers.ValidationError('Cost weight must be positive.')
        return value

    def validate_discount(self, value):
        """Validate that the discount lies in (0, 1)"""
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('Discount must lie strictly between 0 and 1.')
        return value

    def validate_horizon(self, value):
        if value < 1:
            raise serializers.ValidationError('Horizon must be at least 1.')
        return value

    def validate_level(self, value):
        if value <= 0:
            raise serializers.ValidationError('Certificate level must be positive.')
        return value

    def validate_max_steps(self, value):
        if value < 1:
            raise serializers.ValidationError('Max steps must be at least 1.')
        return value

    def validate_goal_tolerance(self, value):
        if value <= 0:
            raise serializers.ValidationError('Goal tolerance must be positive.')
        return value

    def validate_wheel_radius(self, value):
        if value <= 0:
            raise serializers.ValidationError('Wheel radius must be positive.')
        return value

    def validate_wheel_base(self, value):
        if value <= 0:
            raise serializers.ValidationError('Wheel base must be positive.')
        return value

    def validate(self, attrs):
        """Fill defaults and check cross-field bounds"""
        defaults = settings.CERTMPC
        values = {
            'time_step': defaults['TIME_STEP'],
            'cost_weight': defaults['COST_WEIGHT'],
            'goal': list(defaults['GOAL']),
            'start': list(defaults['START']),
            'obstacles': [{'center': list(defaults['OBSTACLE_CENTER']), 'radius': defaults['OBSTACLE_RADIUS']}],
            'input_lower': list(defaults['INPUT_LOWER']),
            'input_upper': list(defaults['INPUT_UPPER']),
            'domain_lower': list(defaults['DOMAIN_LOWER']),
            'domain_upper': list(defaults['DOMAIN_UPPER']),
            'discount': defaults['DISCOUNT'],
            'horizon': defaults['HORIZON'],
            'level': defaults['LEVEL'],
            'max_steps': defaults['MAX_STEPS'],
            'goal_tolerance': defaults['GOAL_TOLERANCE'],
            'wheel_radius': defaults['WHEEL_RADIUS'],
            'wheel_base': defaults['WHEEL_BASE'],
            'swap_wheels': defaults['SWAP_WHEELS'],
        }
        values.update(attrs)

        errors = {}
        for lower, upper, label in (('input_lower', 'input_upper', 'input_box'),
                                    ('domain_lower', 'domain_upper', 'domain_box')):
            if any(lo >= hi for lo, hi in zip(values[lower], values[upper])):
                errors[label] = 'Lower bounds must be below upper bounds.'
        if values['max_steps'] < values['horizon']:
            errors['max_steps'] = 'Max steps must be at least the horizon.'
        if not all(math.isfinite(v) for v in values['goal'] + values['start']):
            errors['goal'] = 'Goal and start must be finite.'
        if errors:
            raise serializers.ValidationError(errors)
        return values


def build_task(values):
    """Turn validated ``task`` values into a (TaskSpec, WheelGeometry) pair."""
    task = dubins_task(
        time_step=values['time_step'],
        cost_weight=values['cost_weight'],
        goal=values['goal'],
        start=values['start'],
        obstacles=[(item['center'], item['radius']) for item in values['obstacles']],
        input_lower=values['input_lower'],
        input_upper=values['input_upper'],
        domain_lower=values['domain_lower'],
        domain_upper=values['domain_upper'],
        discount=values['discount'],
        horizon=values['horizon'],
        level=values['level'],
        max_steps=values['max_steps'],
        goal_tolerance=values['goal_tolerance'],
    )
    geometry = WheelGeometry(values['wheel_radius'], values['wheel_base'], values['swap_wheels'])
    return task, geometry
