from .apex_tool import ApexTool
from .border_distribution_tool import BorderDistributionTool
from .coefficient_table_tool import CoefficientTableTool
from .limit_constant_tool import GeneralizedLimitTool, LimitConstantTool
from .oracle_check_tool import OracleCheckTool
from .simulation_tool import ConditionedSimulationTool, MeanProtectedTool
